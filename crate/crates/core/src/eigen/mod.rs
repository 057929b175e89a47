//! The n-th eigenvalue and eigenfunction of a [`DiscreteOperator`].
//!
//! Finite-difference operators are handled directly by Sturm bisection on the
//! tridiagonal matrix. Spectral operators are first reduced to tridiagonal
//! form by Householder reflections, so eigenvalues come from the same
//! bisection kernel. Eigenvectors are obtained by inverse iteration with the
//! converged eigenvalue as shift.

pub mod dense;
pub mod tridiagonal;

use crate::discretize::{fd_matrix, sine_series, DiscreteOperator, Grid, Tridiagonal};
use crate::weights::PROBE_POINTS;
use crate::{Error, Result};

/// Absolute bisection tolerance (floored by rounding level).
pub const EIGEN_TOL: f64 = 1e-10;
pub const MAX_INVERSE_ITERATIONS: usize = 50;
/// Relative residual `||(A - sigma) v|| / ||v||` accepted by inverse iteration.
pub const RESIDUAL_TOL: f64 = 1e-8;
/// Values below this fraction of `max |v|` are ignored when counting nodes.
pub const NODE_FLOOR: f64 = 1e-9;
/// Grid panels per mode used to sample spectral eigenfunctions.
pub const SPECTRAL_SAMPLES_PER_MODE: usize = 16;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Normalization {
    /// `int phi^2 = 1`
    #[default]
    UnitL2,
    /// `int phi^2 = 1/2`, the pairing in which `phi_n(0) = sin(n pi x)` exactly.
    HalfL2,
}

impl Normalization {
    pub fn norm_squared(self) -> f64 {
        match self {
            Normalization::UnitL2 => 1.0,
            Normalization::HalfL2 => 0.5,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EigenPair {
    pub index: usize,
    pub value: f64,
    /// Grid on which `function` is sampled (interior nodes).
    pub grid: Grid,
    pub function: Vec<f64>,
    /// Sine coefficients for spectral operators, in the same normalization.
    pub coefficients: Option<Vec<f64>>,
    pub node_count: usize,
    pub normalization: Normalization,
    /// Final relative residual of inverse iteration.
    pub residual: f64,
}

/// Tridiagonal form whose spectrum equals that of `op`.
pub fn spectral_form(op: &DiscreteOperator) -> Tridiagonal {
    match op {
        DiscreteOperator::CenteredFd { matrix, .. } => matrix.clone(),
        DiscreteOperator::SineSpectral { matrix } => dense::householder_tridiagonal(matrix),
    }
}

pub fn nth_eigenvalue(op: &DiscreteOperator, n: usize) -> Result<f64> {
    check_index(op, n)?;
    tridiagonal::bisect_nth(&spectral_form(op), n, EIGEN_TOL)
}

/// Eigenvalues `1..=count`, sharing one tridiagonal reduction.
pub fn lowest_eigenvalues(op: &DiscreteOperator, count: usize) -> Result<Vec<f64>> {
    check_index(op, count.max(1))?;
    tridiagonal::lowest(&spectral_form(op), count, EIGEN_TOL)
}

fn check_index(op: &DiscreteOperator, n: usize) -> Result<()> {
    if n == 0 || n > op.dim() {
        return Err(Error::IndexOutOfRange { index: n, dim: op.dim() });
    }
    Ok(())
}

/// Deterministic start vector with nonzero overlap with every eigenvector
/// for all practical purposes (no symmetry about the midpoint).
fn start_vector(len: usize) -> Vec<f64> {
    (0..len)
        .map(|i| 1.0 + (i + 1) as f64 / len as f64 + 0.25 * ((i as f64 * 0.618_033_988_75).fract()))
        .collect()
}

fn euclid(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn inverse_iteration(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    solve: impl Fn(&mut Vec<f64>),
    sigma: f64,
    len: usize,
) -> Result<(Vec<f64>, f64)> {
    let mut v = start_vector(len);
    let mut residual = f64::INFINITY;
    for _ in 0..MAX_INVERSE_ITERATIONS {
        solve(&mut v);
        let norm = euclid(&v);
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::NotConverged {
                what: "inverse iteration",
                residual,
            });
        }
        v.iter_mut().for_each(|x| *x /= norm);
        let av = apply(&v);
        let rayleigh: f64 = av.iter().zip(&v).map(|(a, b)| a * b).sum();
        residual = euclid(&av.iter().zip(&v).map(|(a, b)| a - rayleigh * b).collect::<Vec<_>>());
        if residual <= RESIDUAL_TOL && (rayleigh - sigma).abs() <= 1e-6 * (1.0 + sigma.abs()) {
            return Ok((v, residual));
        }
    }
    Err(Error::NotConverged {
        what: "inverse iteration",
        residual,
    })
}

/// Count strict sign changes, ignoring values with `|v| <= NODE_FLOOR * max |v|`.
pub fn node_count(values: &[f64]) -> usize {
    let max = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max == 0.0 {
        return 0;
    }
    let floor = NODE_FLOOR * max;
    let mut last = 0.0f64;
    let mut count = 0;
    for &v in values {
        if v.abs() > floor {
            let s = v.signum();
            if last != 0.0 && s != last {
                count += 1;
            }
            last = s;
        }
    }
    count
}

fn first_significant_sign(values: &[f64]) -> f64 {
    let max = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    values
        .iter()
        .find(|v| v.abs() > NODE_FLOOR * max)
        .map_or(1.0, |v| v.signum())
}

pub fn nth_eigenpair(op: &DiscreteOperator, n: usize, norm: Normalization) -> Result<EigenPair> {
    let value = nth_eigenvalue(op, n)?;
    let target = norm.norm_squared().sqrt();
    let (grid, mut function, mut coefficients, residual) = match op {
        DiscreteOperator::CenteredFd { grid, matrix } => {
            let lu = tridiagonal::TridiagonalLu::factor_shifted(matrix, value);
            let (v, res) = inverse_iteration(|x| matrix.mul_vec(x), |b| lu.solve_in_place(b), value, matrix.dim())?;
            let l2 = crate::discretize::l2_norm(&v, grid);
            let f: Vec<f64> = v.iter().map(|x| x * target / l2).collect();
            (grid.clone(), f, None, res)
        }
        DiscreteOperator::SineSpectral { matrix } => {
            let lu = dense::DenseLu::factor_shifted(matrix, value);
            let (c, res) = inverse_iteration(|x| matrix.mul_vec(x), |b| *b = lu.solve(b), value, matrix.dim())?;
            // the basis is orthonormal, so the coefficient norm is the L2 norm
            let c: Vec<f64> = c.iter().map(|x| x * target).collect();
            let grid = Grid::unit(SPECTRAL_SAMPLES_PER_MODE * matrix.dim() - 1)?;
            let f = grid.nodes().iter().map(|&x| sine_series(&c, x)).collect();
            (grid, f, Some(c), res)
        }
    };
    if first_significant_sign(&function) < 0.0 {
        function.iter_mut().for_each(|v| *v = -*v);
        if let Some(c) = coefficients.as_mut() {
            c.iter_mut().for_each(|v| *v = -*v);
        }
    }
    let nodes = node_count(&function);
    if nodes != n - 1 {
        return Err(Error::Consistency(format!(
            "eigenfunction {n} has {nodes} interior nodes, expected {}; increase the resolution",
            n - 1
        )));
    }
    Ok(EigenPair {
        index: n,
        value,
        grid,
        function,
        coefficients,
        node_count: nodes,
        normalization: norm,
        residual,
    })
}

/// Strict monotonicity of the `n`-th Dirichlet eigenvalue of `-D^2 + q`:
/// returns whether `sigma_n[q; interval] < sigma_n[q_tilde; interval_tilde]`.
///
/// Requires `interval_tilde` to be contained in `interval` and
/// `q <= q_tilde` on `interval_tilde`, with strictness in at least one of the
/// two comparisons. Both problems use finite differences with `n_interior`
/// points.
pub fn monotonicity_check(
    q: &dyn Fn(f64) -> f64,
    interval: (f64, f64),
    q_tilde: &dyn Fn(f64) -> f64,
    interval_tilde: (f64, f64),
    n: usize,
    n_interior: usize,
) -> Result<bool> {
    const TOL: f64 = 1e-12;
    let (r, s) = interval;
    let (rt, st) = interval_tilde;
    if rt < r - TOL || st > s + TOL || rt >= st {
        return Err(Error::Precondition(format!(
            "({rt}, {st}) is not a subinterval of ({r}, {s})"
        )));
    }
    let mut strict = rt > r + TOL || st < s - TOL;
    for i in 0..PROBE_POINTS {
        let x = rt + (st - rt) * i as f64 / (PROBE_POINTS - 1) as f64;
        let (a, b) = (q(x), q_tilde(x));
        if a > b + TOL {
            return Err(Error::Precondition(format!("q > q_tilde at x = {x}")));
        }
        strict |= a < b - TOL;
    }
    if !strict {
        return Err(Error::Precondition(
            "potentials and intervals coincide; no strict inequality to test".into(),
        ));
    }
    let sigma = |q: &dyn Fn(f64) -> f64, (a, b): (f64, f64)| -> Result<f64> {
        let grid = Grid::new(a, b, n_interior)?;
        let t = fd_matrix(&grid, q);
        tridiagonal::bisect_nth(&t, n, EIGEN_TOL)
    };
    Ok(sigma(q, interval)? < sigma(q_tilde, interval_tilde)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::{assemble_fd, assemble_spectral, l2_norm};
    use std::f64::consts::PI;

    #[test]
    fn spectral_free_eigenvalues() {
        let op = assemble_spectral(16, |_| 0.0).unwrap();
        assert!((nth_eigenvalue(&op, 2).unwrap() - 39.478418).abs() < 1e-6);
        assert!((nth_eigenvalue(&op, 1).unwrap() - PI * PI).abs() < 1e-10);
        let shifted = assemble_spectral(16, |_| 2.5).unwrap();
        for n in 1..=5 {
            let d = nth_eigenvalue(&shifted, n).unwrap() - nth_eigenvalue(&op, n).unwrap();
            assert!((d - 2.5).abs() < 1e-10);
        }
        assert!(matches!(nth_eigenvalue(&op, 17), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn fd_laplacian_closed_form_and_pi_squared() {
        let grid = Grid::unit(999).unwrap();
        let op = assemble_fd(&grid, |_| 0.0).unwrap();
        assert!((nth_eigenvalue(&op, 1).unwrap() - PI * PI).abs() < 1e-4);
        let h = grid.h();
        for n in 1..=5 {
            let exact = 2.0 / (h * h) * (1.0 - (n as f64 * PI * h).cos());
            assert!((nth_eigenvalue(&op, n).unwrap() - exact).abs() < 1e-8);
        }
    }

    #[test]
    fn eigenfunction_shapes_and_normalization() {
        let grid = Grid::unit(400).unwrap();
        let op = assemble_fd(&grid, |_| 0.0).unwrap();
        let p = nth_eigenpair(&op, 3, Normalization::UnitL2).unwrap();
        assert_eq!(p.node_count, 2);
        assert!((l2_norm(&p.function, &grid) - 1.0).abs() < 1e-10);
        for (x, v) in grid.nodes().iter().zip(&p.function) {
            assert!((v - 2f64.sqrt() * (3.0 * PI * x).sin()).abs() < 1e-9);
        }
        let half = nth_eigenpair(&op, 1, Normalization::HalfL2).unwrap();
        for (x, v) in grid.nodes().iter().zip(&half.function) {
            assert!((v - (PI * x).sin()).abs() < 1e-10);
        }
    }

    #[test]
    fn weighted_eigenpair_node_counts() {
        let grid = Grid::unit(2000).unwrap();
        let op = assemble_fd(&grid, |x| -50.0 * (2.0 * PI * x).sin()).unwrap();
        let p = nth_eigenpair(&op, 2, Normalization::UnitL2).unwrap();
        assert_eq!(p.node_count, 1);
        assert!(p.function[0] > 0.0);
        let sp = assemble_spectral(64, |x| -50.0 * (2.0 * PI * x).sin()).unwrap();
        for n in 1..=10 {
            let p = nth_eigenpair(&sp, n, Normalization::UnitL2).unwrap();
            assert_eq!(p.node_count, n - 1);
            let c = p.coefficients.unwrap();
            assert!((c.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-10);
            assert!((l2_norm(&p.function, &p.grid) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn node_count_floor() {
        assert_eq!(node_count(&[1.0, 1e-12, -1e-13, 2.0]), 0);
        assert_eq!(node_count(&[1.0, 0.5, -0.5, -1.0, 0.0, 1.0]), 2);
        assert_eq!(node_count(&[0.0; 4]), 0);
    }

    #[test]
    fn monotonicity_examples() {
        let zero = |_: f64| 0.0;
        let one = |_: f64| 1.0;
        assert!(monotonicity_check(&zero, (0.0, 1.0), &one, (0.0, 1.0), 1, 400).unwrap());
        assert!(monotonicity_check(&zero, (0.0, 1.0), &zero, (0.25, 0.75), 1, 400).unwrap());
        let minus = |x: f64| -10.0 * (2.0 * PI * x).sin();
        let plus = |x: f64| 10.0 * (2.0 * PI * x).sin();
        assert!(matches!(
            monotonicity_check(&minus, (0.0, 1.0), &plus, (0.0, 1.0), 2, 400),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(
            monotonicity_check(&one, (0.0, 1.0), &zero, (0.0, 1.0), 1, 400),
            Err(Error::Precondition(_))
        ));
    }
}
