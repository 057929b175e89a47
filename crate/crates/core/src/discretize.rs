//! Discrete representations of `-D^2 + q(x)` with Dirichlet conditions.
//!
//! Two schemes are provided: centered finite differences on a uniform grid
//! (symmetric tridiagonal) and a Galerkin method in the orthonormal sine basis
//! `sqrt(2) sin(j pi x)` on `(0, 1)` (dense symmetric).

use std::f64::consts::PI;
use std::fmt;

use crate::{Error, Result};

pub const MIN_INTERIOR: usize = 8;
pub const MIN_MODES: usize = 4;
pub const DEFAULT_INTERIOR: usize = 2000;
pub const DEFAULT_MODES: usize = 64;
/// Trapezoid panels per sine mode for the Galerkin integrals.
pub const QUADRATURE_PANELS_PER_MODE: usize = 64;

/// Uniform grid of `n` interior points on `(r, s)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    r: f64,
    s: f64,
    n: usize,
    h: f64,
}

impl Grid {
    pub fn new(r: f64, s: f64, n: usize) -> Result<Self> {
        if !(r.is_finite() && s.is_finite()) || r >= s {
            return Err(Error::Config(format!("grid interval ({r}, {s}) is empty")));
        }
        if n < MIN_INTERIOR {
            return Err(Error::Config(format!(
                "grid needs at least {MIN_INTERIOR} interior points, got {n}"
            )));
        }
        Ok(Self {
            r,
            s,
            n,
            h: (s - r) / (n + 1) as f64,
        })
    }

    pub fn unit(n: usize) -> Result<Self> {
        Self::new(0.0, 1.0, n)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.r, self.s)
    }

    #[inline]
    pub fn node(&self, i: usize) -> f64 {
        self.r + (i + 1) as f64 * self.h
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.node(i)).collect()
    }

    /// Grid nodes with the two boundary points prepended/appended.
    pub fn nodes_with_boundary(&self) -> Vec<f64> {
        (0..self.n + 2).map(|i| self.r + i as f64 * self.h).collect()
    }
}

/// Symmetric tridiagonal matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Tridiagonal {
    pub diag: Vec<f64>,
    /// `off[i]` couples rows `i` and `i + 1`.
    pub off: Vec<f64>,
}

impl Tridiagonal {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Self {
        debug_assert_eq!(off.len() + 1, diag.len().max(1));
        Self { diag, off }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn shifted(&self, c: f64) -> Self {
        Self {
            diag: self.diag.iter().map(|d| d + c).collect(),
            off: self.off.clone(),
        }
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n)
            .map(|i| {
                let mut y = self.diag[i] * v[i];
                if i > 0 {
                    y += self.off[i - 1] * v[i - 1];
                }
                if i + 1 < n {
                    y += self.off[i] * v[i + 1];
                }
                y
            })
            .collect()
    }

    /// Gershgorin interval containing the whole spectrum.
    pub fn gershgorin(&self) -> (f64, f64) {
        let max_off = self.off.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        let lo = self.diag.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.diag.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo - 2.0 * max_off, hi + 2.0 * max_off)
    }

    pub fn norm_inf(&self) -> f64 {
        let n = self.dim();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i].abs();
                if i > 0 {
                    s += self.off[i - 1].abs();
                }
                if i + 1 < n {
                    s += self.off[i].abs();
                }
                s
            })
            .fold(0.0, f64::max)
    }
}

/// Dense symmetric matrix stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseSymmetric {
    n: usize,
    data: Vec<f64>,
}

impl DenseSymmetric {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    /// Sets both `(i, j)` and `(j, i)`.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
        self.data[j * self.n + i] = v;
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.n)
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        self.rows()
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for j in 0..i {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn norm_inf(&self) -> f64 {
        self.rows()
            .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// `self + alpha * other + shift * I`.
    pub fn combine(&self, alpha: f64, other: &DenseSymmetric, shift: f64) -> Self {
        assert_eq!(self.n, other.n);
        let mut out = self.clone();
        for (o, b) in out.data.iter_mut().zip(&other.data) {
            *o += alpha * b;
        }
        for i in 0..self.n {
            out.data[i * self.n + i] += shift;
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    FiniteDifference { n_interior: usize },
    Spectral { n_modes: usize },
}

impl Scheme {
    pub fn fd_default() -> Self {
        Scheme::FiniteDifference {
            n_interior: DEFAULT_INTERIOR,
        }
    }

    pub fn spectral_default() -> Self {
        Scheme::Spectral {
            n_modes: DEFAULT_MODES,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Scheme::FiniteDifference { .. } => "fd",
            Scheme::Spectral { .. } => "spectral",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Scheme::FiniteDifference { n_interior } if n_interior < MIN_INTERIOR => Err(Error::Config(
                format!("n_interior must be at least {MIN_INTERIOR}"),
            )),
            Scheme::Spectral { n_modes } if n_modes < MIN_MODES => {
                Err(Error::Config(format!("n_modes must be at least {MIN_MODES}")))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scheme::FiniteDifference { n_interior } => write!(f, "fd(N={n_interior})"),
            Scheme::Spectral { n_modes } => write!(f, "spectral(M={n_modes})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum DiscreteOperator {
    CenteredFd { grid: Grid, matrix: Tridiagonal },
    SineSpectral { matrix: DenseSymmetric },
}

impl DiscreteOperator {
    pub fn dim(&self) -> usize {
        match self {
            DiscreteOperator::CenteredFd { matrix, .. } => matrix.dim(),
            DiscreteOperator::SineSpectral { matrix } => matrix.dim(),
        }
    }

    pub fn scheme(&self) -> Scheme {
        match self {
            DiscreteOperator::CenteredFd { grid, .. } => Scheme::FiniteDifference { n_interior: grid.len() },
            DiscreteOperator::SineSpectral { matrix } => Scheme::Spectral { n_modes: matrix.dim() },
        }
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        match self {
            DiscreteOperator::CenteredFd { matrix, .. } => matrix.mul_vec(v),
            DiscreteOperator::SineSpectral { matrix } => matrix.mul_vec(v),
        }
    }
}

/// Tridiagonal finite-difference matrix of `-D^2 + q` on `grid`:
/// diagonal `2/h^2 + q(x_i)`, off-diagonal `-1/h^2`.
pub fn fd_matrix(grid: &Grid, q: impl Fn(f64) -> f64) -> Tridiagonal {
    let h2 = grid.h() * grid.h();
    let diag = (0..grid.len()).map(|i| 2.0 / h2 + q(grid.node(i))).collect();
    let off = vec![-1.0 / h2; grid.len().saturating_sub(1)];
    Tridiagonal::new(diag, off)
}

pub fn assemble_fd(grid: &Grid, q: impl Fn(f64) -> f64) -> Result<DiscreteOperator> {
    if grid.len() < MIN_INTERIOR {
        return Err(Error::Config(format!(
            "finite differences need at least {MIN_INTERIOR} interior points"
        )));
    }
    Ok(DiscreteOperator::CenteredFd {
        matrix: fd_matrix(grid, q),
        grid: grid.clone(),
    })
}

/// Sampled sine basis on `(0, 1)` with the trapezoid nodes used for the
/// Galerkin integrals.
#[derive(Clone, Debug)]
pub struct SineBasis {
    modes: usize,
    panels: usize,
    /// `table[j][l] = sqrt(2) sin((j+1) pi x_l)` at interior nodes `x_l = (l+1)/panels`.
    table: Vec<Vec<f64>>,
}

impl SineBasis {
    pub fn new(modes: usize) -> Result<Self> {
        Self::with_panels(modes, QUADRATURE_PANELS_PER_MODE * modes)
    }

    pub fn with_panels(modes: usize, panels: usize) -> Result<Self> {
        if modes < MIN_MODES {
            return Err(Error::Config(format!("spectral scheme needs at least {MIN_MODES} modes")));
        }
        if panels < 8 * modes {
            return Err(Error::Config("spectral quadrature needs at least 8 panels per mode".into()));
        }
        let table = (1..=modes)
            .map(|j| {
                (1..panels)
                    .map(|l| 2f64.sqrt() * (j as f64 * PI * l as f64 / panels as f64).sin())
                    .collect()
            })
            .collect();
        Ok(Self { modes, panels, table })
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    /// `G_ij = 2 int_0^1 q sin(i pi x) sin(j pi x) dx` by the composite trapezoid
    /// rule (the integrand vanishes at both endpoints).
    pub fn potential_matrix(&self, q: impl Fn(f64) -> f64) -> DenseSymmetric {
        let w = 1.0 / self.panels as f64;
        let qv: Vec<f64> = (1..self.panels).map(|l| q(l as f64 * w) * w).collect();
        let mut out = DenseSymmetric::zeros(self.modes);
        for i in 0..self.modes {
            let si: Vec<f64> = self.table[i].iter().zip(&qv).map(|(s, q)| s * q).collect();
            for j in 0..=i {
                let v: f64 = si.iter().zip(&self.table[j]).map(|(a, b)| a * b).sum();
                out.set(i, j, v);
            }
        }
        out
    }

    /// Stiffness part: `diag((j pi)^2)`.
    pub fn laplacian(&self) -> DenseSymmetric {
        let mut out = DenseSymmetric::zeros(self.modes);
        for j in 0..self.modes {
            let k = (j + 1) as f64 * PI;
            out.set(j, j, k * k);
        }
        out
    }

    pub fn assemble(&self, q: impl Fn(f64) -> f64) -> DiscreteOperator {
        DiscreteOperator::SineSpectral {
            matrix: self.laplacian().combine(1.0, &self.potential_matrix(q), 0.0),
        }
    }
}

/// Galerkin matrix of `-D^2 + q` in the basis `sqrt(2) sin(j pi x)`, `j = 1..=modes`.
pub fn assemble_spectral(modes: usize, q: impl Fn(f64) -> f64) -> Result<DiscreteOperator> {
    Ok(SineBasis::new(modes)?.assemble(q))
}

/// Evaluate a sine expansion `sum_j c_j sqrt(2) sin(j pi x)` at `x`.
pub fn sine_series(coeffs: &[f64], x: f64) -> f64 {
    coeffs
        .iter()
        .enumerate()
        .map(|(j, c)| c * 2f64.sqrt() * ((j + 1) as f64 * PI * x).sin())
        .sum()
}

/// Trapezoid `(int u^2)^(1/2)` over the grid with zero boundary values.
pub fn l2_norm(values: &[f64], grid: &Grid) -> f64 {
    debug_assert_eq!(values.len(), grid.len());
    (grid.h() * values.iter().map(|v| v * v).sum::<f64>()).sqrt()
}

/// Trapezoid `int u v` over the grid with zero boundary values.
pub fn inner(u: &[f64], v: &[f64], grid: &Grid) -> f64 {
    grid.h() * u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::trapezoid;

    #[test]
    fn fd_small_grid_entries() {
        // N = 3 is below the minimum; build the matrix directly.
        let grid = Grid { r: 0.0, s: 1.0, n: 3, h: 0.25 };
        let t = fd_matrix(&grid, |_| 0.0);
        assert_eq!(t.diag, vec![32.0; 3]);
        assert_eq!(t.off, vec![-16.0; 2]);
        assert!(matches!(Grid::unit(3), Err(Error::Config(_))));
    }

    #[test]
    fn fd_shift_is_exact() {
        let grid = Grid::unit(50).unwrap();
        let a = fd_matrix(&grid, |_| 0.0);
        let b = fd_matrix(&grid, |_| 5.0);
        for (x, y) in a.diag.iter().zip(&b.diag) {
            assert_eq!(y - x, 5.0);
        }
        assert_eq!(a.off, b.off);
    }

    #[test]
    fn grid_nodes() {
        let g = Grid::new(0.25, 0.75, 9).unwrap();
        assert!((g.h() - 0.05).abs() < 1e-15);
        assert!((g.node(0) - 0.3).abs() < 1e-15);
        assert!((g.node(8) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn spectral_free_operator_is_diagonal() {
        let op = assemble_spectral(8, |_| 0.0).unwrap();
        let DiscreteOperator::SineSpectral { matrix } = &op else { unreachable!() };
        for i in 0..8 {
            for j in 0..8 {
                let want = if i == j { ((i + 1) as f64 * PI).powi(2) } else { 0.0 };
                assert!((matrix.get(i, j) - want).abs() < 1e-12);
            }
        }
        let op1 = assemble_spectral(8, |_| 1.0).unwrap();
        let DiscreteOperator::SineSpectral { matrix: m1 } = &op1 else { unreachable!() };
        for j in 0..8 {
            assert!((m1.get(j, j) - ((j + 1) as f64 * PI).powi(2) - 1.0).abs() < 1e-12);
        }
        assert!(matches!(assemble_spectral(3, |_| 0.0), Err(Error::Config(_))));
    }

    #[test]
    fn spectral_entry_matches_fine_quadrature() {
        let lambda = 7.0;
        let q = |x: f64| -lambda * (2.0 * PI * x).sin();
        let op = assemble_spectral(16, q).unwrap();
        let DiscreteOperator::SineSpectral { matrix } = &op else { unreachable!() };
        let oracle = 2.0
            * trapezoid(
                |x| q(x) * (PI * x).sin() * (2.0 * PI * x).sin(),
                0.0,
                1.0,
                1_000_000,
            );
        assert!((matrix.get(0, 1) - oracle).abs() < 1e-10, "{} vs {oracle}", matrix.get(0, 1));
        assert!(matrix.max_asymmetry() <= 1e-12);
    }

    #[test]
    fn l2_norm_examples() {
        let grid = Grid::unit(999).unwrap();
        let u: Vec<f64> = grid.nodes().iter().map(|x| (PI * x).sin()).collect();
        assert!((l2_norm(&u, &grid) - 0.5f64.sqrt()).abs() < 1e-6);
        assert_eq!(l2_norm(&vec![0.0; 999], &grid), 0.0);
        // interior ones, boundary zeros: h * N = 999/1000
        let ones = vec![1.0; 999];
        let oracle = (999.0f64 / 1000.0).sqrt();
        assert!((l2_norm(&ones, &grid) - oracle).abs() < 1e-14);
        assert!((l2_norm(&ones, &grid) - 1.0).abs() < 2e-3);
    }
}
