//! The eigencurves `lambda -> Sigma_n(lambda)`, the n-th Dirichlet eigenvalue
//! of `-D^2 - lambda m(x)` on `(0, 1)`.
//!
//! Shifting by `mu` is exact (`Sigma_n(lambda, mu) = Sigma_n(lambda) - mu`), so
//! every level-set question reduces to a single tabulation per mode.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::discretize::{
    DenseSymmetric, DiscreteOperator, Grid, Scheme, SineBasis, Tridiagonal,
};
use crate::eigen::{self, dense, tridiagonal, EigenPair, Normalization};
use crate::parallel::{self, Exec};
use crate::weights::WeightFunction;
use crate::{Error, Result};

pub const DEFAULT_RANGE: (f64, f64) = (-200.0, 200.0);
pub const DEFAULT_STEP: f64 = 0.5;
/// Level-set refinement target `|Sigma_n(lambda) - mu|`.
pub const ROOT_TOL: f64 = 1e-8;
/// Values within this distance of the maximum count as argmax locations.
pub const ARGMAX_TOL: f64 = 1e-6;
/// Second differences below this are treated as non-positive.
pub const CONCAVITY_TOL: f64 = 1e-8;
/// Step of the five-point stencil used for `Sigma_n''(0)`.
pub const STENCIL_STEP: f64 = 0.25;
/// Lambda half-width of the symmetric slope stencil at a root.
const SLOPE_STEP: f64 = 1e-3;
/// Minimum number of tabulated points.
pub const MIN_SAMPLES: usize = 5;

enum Backend {
    Fd { grid: Grid, weight: Vec<f64> },
    Spectral { laplacian: DenseSymmetric, weight: DenseSymmetric },
}

/// A weight plus discretization, able to evaluate `Sigma_n(lambda)` cheaply:
/// the weight is sampled (or projected) once and each `lambda` only rescales it.
pub struct CurveModel {
    weight: WeightFunction,
    scheme: Scheme,
    backend: Backend,
    tol: f64,
}

impl fmt::Debug for CurveModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CurveModel")
            .field("weight", &self.weight)
            .field("scheme", &self.scheme)
            .finish()
    }
}

impl CurveModel {
    pub fn new(weight: WeightFunction, scheme: Scheme) -> Result<Self> {
        scheme.validate()?;
        let backend = match scheme {
            Scheme::FiniteDifference { n_interior } => {
                let grid = Grid::unit(n_interior)?;
                let weight = weight.sample(&grid.nodes());
                Backend::Fd { grid, weight }
            }
            Scheme::Spectral { n_modes } => {
                let basis = SineBasis::new(n_modes)?;
                Backend::Spectral {
                    laplacian: basis.laplacian(),
                    weight: basis.potential_matrix(|x| weight.at(x)),
                }
            }
        };
        Ok(Self {
            weight,
            scheme,
            backend,
            tol: eigen::EIGEN_TOL,
        })
    }

    /// Bisection tolerance for eigenvalues (default [`eigen::EIGEN_TOL`]).
    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn weight(&self) -> &WeightFunction {
        &self.weight
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    /// The discrete `-D^2 - lambda m`.
    pub fn operator(&self, lambda: f64) -> DiscreteOperator {
        match &self.backend {
            Backend::Fd { grid, weight } => {
                let h2 = grid.h() * grid.h();
                let diag = weight.iter().map(|m| 2.0 / h2 - lambda * m).collect();
                DiscreteOperator::CenteredFd {
                    grid: grid.clone(),
                    matrix: Tridiagonal::new(diag, vec![-1.0 / h2; grid.len() - 1]),
                }
            }
            Backend::Spectral { laplacian, weight } => DiscreteOperator::SineSpectral {
                matrix: laplacian.combine(-lambda, weight, 0.0),
            },
        }
    }

    fn tridiagonal(&self, lambda: f64) -> Tridiagonal {
        match self.operator(lambda) {
            DiscreteOperator::CenteredFd { matrix, .. } => matrix,
            DiscreteOperator::SineSpectral { matrix } => dense::householder_tridiagonal(&matrix),
        }
    }

    pub fn sigma(&self, n: usize, lambda: f64) -> Result<f64> {
        tridiagonal::bisect_nth(&self.tridiagonal(lambda), n, self.tol)
    }

    /// `Sigma_1(lambda), ..., Sigma_count(lambda)`.
    pub fn sigmas(&self, count: usize, lambda: f64) -> Result<Vec<f64>> {
        tridiagonal::lowest(&self.tridiagonal(lambda), count, self.tol)
    }

    pub fn eigenpair(&self, n: usize, lambda: f64, norm: Normalization) -> Result<EigenPair> {
        eigen::nth_eigenpair(&self.operator(lambda), n, norm)
    }

    /// Five-point central estimate of `Sigma_n''(center)` with step `step`.
    pub fn second_derivative(&self, n: usize, center: f64, step: f64) -> Result<f64> {
        let f = |k: f64| self.sigma(n, center + k * step);
        let (m2, m1, c, p1, p2) = (f(-2.0)?, f(-1.0)?, f(0.0)?, f(1.0)?, f(2.0)?);
        Ok((-m2 + 16.0 * m1 - 30.0 * c + 16.0 * p1 - p2) / (12.0 * step * step))
    }

    /// Symmetric difference estimate of `Sigma_n'(center)`.
    pub fn slope(&self, n: usize, center: f64, step: f64) -> Result<f64> {
        Ok((self.sigma(n, center + step)? - self.sigma(n, center - step)?) / (2.0 * step))
    }
}

/// Tabulated `Sigma_n` on a uniform lambda grid with central-difference
/// derivative estimates (`NaN` at the two end points).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigencurveSample {
    pub mode: usize,
    pub lambdas: Vec<f64>,
    pub values: Vec<f64>,
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
}

impl EigencurveSample {
    pub fn from_values(mode: usize, lambdas: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if lambdas.len() != values.len() || lambdas.len() < MIN_SAMPLES {
            return Err(Error::Config(format!(
                "an eigencurve needs at least {MIN_SAMPLES} samples with matching lengths"
            )));
        }
        let len = lambdas.len();
        let mut d1 = vec![f64::NAN; len];
        let mut d2 = vec![f64::NAN; len];
        for i in 1..len - 1 {
            let dl = lambdas[i + 1] - lambdas[i];
            d1[i] = (values[i + 1] - values[i - 1]) / (2.0 * dl);
            d2[i] = (values[i + 1] - 2.0 * values[i] + values[i - 1]) / (dl * dl);
        }
        Ok(Self {
            mode,
            lambdas,
            values,
            d1,
            d2,
        })
    }

    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn step(&self) -> f64 {
        self.lambdas[1] - self.lambdas[0]
    }

    /// Index of the sample at `lambda` (to within a thousandth of a step).
    pub fn index_of(&self, lambda: f64) -> Option<usize> {
        let step = self.step();
        let i = ((lambda - self.lambdas[0]) / step).round();
        if i < 0.0 || i as usize >= self.len() {
            return None;
        }
        let i = i as usize;
        ((self.lambdas[i] - lambda).abs() <= 1e-3 * step).then_some(i)
    }

    pub fn value_at(&self, lambda: f64) -> Option<f64> {
        self.index_of(lambda).map(|i| self.values[i])
    }
}

/// `lo, lo + step, ..., hi` with the count rounded to the nearest integer.
pub fn lambda_grid(range: (f64, f64), step: f64) -> Result<Vec<f64>> {
    let (lo, hi) = range;
    if !(step > 0.0) || !step.is_finite() || !(hi > lo) {
        return Err(Error::Config(format!(
            "invalid lambda range [{lo}, {hi}] with step {step}"
        )));
    }
    let count = ((hi - lo) / step).round() as usize + 1;
    if count < MIN_SAMPLES {
        return Err(Error::Config(format!(
            "lambda range [{lo}, {hi}] with step {step} has fewer than {MIN_SAMPLES} points"
        )));
    }
    Ok((0..count).map(|i| lo + i as f64 * step).collect())
}

pub fn sample_curve(model: &CurveModel, n: usize, range: (f64, f64), step: f64, exec: Exec) -> Result<EigencurveSample> {
    Ok(sample_modes(model, &[n], range, step, exec)?.remove(0))
}

/// Tabulate several modes at once; each lambda costs one eigenvalue sweep.
pub fn sample_modes(
    model: &CurveModel,
    modes: &[usize],
    range: (f64, f64),
    step: f64,
    exec: Exec,
) -> Result<Vec<EigencurveSample>> {
    let top = modes.iter().copied().max().ok_or_else(|| Error::Config("no modes requested".into()))?;
    if modes.contains(&0) {
        return Err(Error::IndexOutOfRange { index: 0, dim: top });
    }
    let lambdas = lambda_grid(range, step)?;
    let rows = parallel::try_map(exec, &lambdas, |&l| model.sigmas(top, l))?;
    modes
        .iter()
        .map(|&n| EigencurveSample::from_values(n, lambdas.clone(), rows.iter().map(|r| r[n - 1]).collect()))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RootLabel {
    /// Most negative of two negative roots.
    MinusOuter,
    /// Negative root closest to zero when two exist.
    MinusInner,
    PlusInner,
    PlusOuter,
    /// The only negative root.
    Minus,
    /// The only positive root.
    Plus,
    /// Any further root on one side (non-symmetric weights).
    Extra,
}

impl fmt::Display for RootLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RootLabel::MinusOuter => "minus-outer",
            RootLabel::MinusInner => "minus-inner",
            RootLabel::PlusInner => "plus-inner",
            RootLabel::PlusOuter => "plus-outer",
            RootLabel::Minus => "minus",
            RootLabel::Plus => "plus",
            RootLabel::Extra => "extra",
        };
        f.write_str(s)
    }
}

/// A root of `Sigma_n(lambda) = mu`, i.e. a bifurcation value from `u = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BifurcationPoint {
    pub mode: usize,
    pub label: RootLabel,
    pub lambda: f64,
    pub mu: f64,
    /// `Sigma_n'(lambda)`.
    pub slope: f64,
    /// The bracketing interval touches the end of the sampled range.
    pub boundary: bool,
    /// A tangential (double) root at a sample point.
    pub tangent: bool,
}

fn refine_root(f: impl Fn(f64) -> Result<f64>, mut a: f64, mut b: f64, mut fa: f64, mut fb: f64) -> Result<f64> {
    // Illinois-type regula falsi with a bisection safeguard.
    let mut side = 0i8;
    let mut best = if fa.abs() < fb.abs() { a } else { b };
    for _ in 0..200 {
        let width = b - a;
        if width.abs() <= 1e-14 * (1.0 + a.abs().max(b.abs())) {
            break;
        }
        let mut c = (a * fb - b * fa) / (fb - fa);
        if !c.is_finite() || c <= a.min(b) + 0.01 * width.abs() || c >= a.max(b) - 0.01 * width.abs() {
            c = 0.5 * (a + b);
        }
        let fc = f(c)?;
        best = c;
        if fc.abs() <= 0.1 * ROOT_TOL {
            break;
        }
        if fc.signum() == fb.signum() {
            b = c;
            fb = fc;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = c;
            fa = fc;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
        if fc.abs() <= ROOT_TOL && width.abs() < 1e-6 {
            break;
        }
    }
    Ok(best)
}

fn assign_labels(lambdas: &[f64]) -> Vec<RootLabel> {
    let neg: Vec<usize> = (0..lambdas.len()).filter(|&i| lambdas[i] < 0.0).collect();
    let pos: Vec<usize> = (0..lambdas.len()).filter(|&i| lambdas[i] >= 0.0).collect();
    let mut labels = vec![RootLabel::Extra; lambdas.len()];
    match neg.len() {
        1 => labels[neg[0]] = RootLabel::Minus,
        k if k >= 2 => {
            labels[neg[k - 1]] = RootLabel::MinusInner;
            labels[neg[k - 2]] = RootLabel::MinusOuter;
        }
        _ => {}
    }
    match pos.len() {
        1 => labels[pos[0]] = RootLabel::Plus,
        k if k >= 2 => {
            labels[pos[0]] = RootLabel::PlusInner;
            labels[pos[1]] = RootLabel::PlusOuter;
        }
        _ => {}
    }
    labels
}

/// All roots of `Sigma_n(lambda) = mu` within the sampled range, sorted by
/// lambda. Sign changes between samples are refined on `model`; a sample
/// that hits the level tangentially (a local extremum) yields a double root.
pub fn roots_at_level(model: &CurveModel, sample: &EigencurveSample, mu: f64) -> Result<Vec<BifurcationPoint>> {
    let n = sample.mode;
    let f: Vec<f64> = sample.values.iter().map(|v| v - mu).collect();
    let last = f.len() - 1;
    // (lambda, boundary, tangent)
    let mut found: Vec<(f64, bool, bool)> = Vec::new();
    for i in 0..=last {
        if f[i].abs() > ROOT_TOL {
            continue;
        }
        let left = if i > 0 { f[i - 1] } else { f64::NAN };
        let right = if i < last { f[i + 1] } else { f64::NAN };
        let boundary = i == 0 || i == last;
        let tangent = !boundary && left.signum() == right.signum();
        found.push((sample.lambdas[i], boundary, tangent));
        if tangent {
            found.push((sample.lambdas[i], boundary, tangent));
        }
    }
    for i in 0..last {
        let (fa, fb) = (f[i], f[i + 1]);
        if fa.abs() <= ROOT_TOL || fb.abs() <= ROOT_TOL || fa.signum() == fb.signum() {
            continue;
        }
        let lambda = refine_root(
            |l| Ok(model.sigma(n, l)? - mu),
            sample.lambdas[i],
            sample.lambdas[i + 1],
            fa,
            fb,
        )?;
        found.push((lambda, i == 0 || i + 1 == last, false));
    }
    found.sort_by(|a, b| a.0.total_cmp(&b.0));
    let lambdas: Vec<f64> = found.iter().map(|r| r.0).collect();
    let mut labels = assign_labels(&lambdas);
    // a tangential root at zero is the collapsed inner pair
    for (i, r) in found.iter().enumerate() {
        if r.2 && r.0 == 0.0 {
            let first = i == 0 || found[i - 1].0 != r.0;
            labels[i] = if first { RootLabel::MinusInner } else { RootLabel::PlusInner };
        }
    }
    found
        .iter()
        .zip(labels)
        .map(|(&(lambda, boundary, tangent), label)| {
            Ok(BifurcationPoint {
                mode: n,
                label,
                lambda,
                mu,
                slope: model.slope(n, lambda, SLOPE_STEP)?,
                boundary,
                tangent,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveExtremum {
    pub mode: usize,
    pub mu_n: f64,
    pub argmax: Vec<f64>,
}

fn golden_max(f: impl Fn(f64) -> Result<f64>, mut a: f64, mut b: f64) -> Result<(f64, f64)> {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    while b - a > 1e-7 * (1.0 + a.abs().max(b.abs())) {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc >= fd { (c, fc) } else { (d, fd) })
}

/// `mu_n = max Sigma_n`, refined on `model` around every discrete local
/// maximum; all locations within [`ARGMAX_TOL`] of the maximum are reported.
pub fn curve_maximum(model: &CurveModel, sample: &EigencurveSample) -> Result<CurveExtremum> {
    let v = &sample.values;
    let last = v.len() - 1;
    let top = (0..=last).max_by(|&i, &j| v[i].total_cmp(&v[j])).unwrap_or(0);
    if top == 0 || top == last {
        return Err(Error::RangeTooSmall { lambda: sample.lambdas[top] });
    }
    let n = sample.mode;
    let mut candidates = Vec::new();
    for i in 1..last {
        if v[i] >= v[i - 1] && v[i] > v[i + 1] && v[top] - v[i] <= 1e-2 * (1.0 + v[top].abs()) {
            let (l, s) = golden_max(|l| model.sigma(n, l), sample.lambdas[i - 1], sample.lambdas[i + 1])?;
            candidates.push((l, s));
        }
    }
    let mu_n = candidates.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
    let mut argmax: Vec<f64> = Vec::new();
    for (l, s) in candidates {
        if mu_n - s <= ARGMAX_TOL && argmax.iter().all(|a| (a - l).abs() > 1e-4) {
            argmax.push(l);
        }
    }
    Ok(CurveExtremum { mode: n, mu_n, argmax })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcavityReport {
    pub mode: usize,
    pub globally_concave: bool,
    /// Five-point estimate of `Sigma_n''(0)` from the tabulated values.
    pub second_diff_at_zero: f64,
    pub max_second_diff: f64,
    pub argmax_second_diff: f64,
}

pub fn concavity_report(sample: &EigencurveSample) -> Result<ConcavityReport> {
    let i0 = sample
        .index_of(0.0)
        .ok_or_else(|| Error::Precondition("lambda = 0 is not a sample point".into()))?;
    if i0 < 2 || i0 + 2 >= sample.len() {
        return Err(Error::Precondition("lambda = 0 needs two samples on each side".into()));
    }
    let v = &sample.values;
    let dl = sample.step();
    let at_zero = (-v[i0 - 2] + 16.0 * v[i0 - 1] - 30.0 * v[i0] + 16.0 * v[i0 + 1] - v[i0 + 2]) / (12.0 * dl * dl);
    let (mut worst, mut at) = (f64::NEG_INFINITY, f64::NAN);
    for i in 1..sample.len() - 1 {
        if sample.d2[i] > worst {
            worst = sample.d2[i];
            at = sample.lambdas[i];
        }
    }
    Ok(ConcavityReport {
        mode: sample.mode,
        globally_concave: worst < CONCAVITY_TOL,
        second_diff_at_zero: at_zero,
        max_second_diff: worst,
        argmax_second_diff: at,
    })
}

/// Upper bound `Sigma_n(lambda) <= (n pi / (2 eps))^2 - lambda m_L` from
/// comparison with the Dirichlet problem on `[x+ - eps, x+ + eps]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayBound {
    pub witness: f64,
    pub epsilon: f64,
    /// `min m` over the comparison interval.
    pub m_lower: f64,
    pub bound: f64,
}

pub const DECAY_EPSILONS: [f64; 4] = [0.2, 0.1, 0.05, 0.02];

pub fn decay_bound(m: &WeightFunction, n: usize, lambda: f64) -> Result<DecayBound> {
    if !(lambda > 0.0) {
        return Err(Error::Precondition(format!("decay bound needs lambda > 0, got {lambda}")));
    }
    let witness = m
        .positivity_witness()
        .ok_or_else(|| Error::Precondition(format!("{m} has no positivity witness")))?;
    for eps in DECAY_EPSILONS {
        let (lo, hi) = (witness - eps, witness + eps);
        if lo <= 0.0 || hi >= 1.0 {
            continue;
        }
        let m_lower = crate::weights::probe_grid()
            .filter(|&x| x >= lo && x <= hi)
            .chain([lo, hi])
            .map(|x| m.at(x))
            .fold(f64::INFINITY, f64::min);
        if m_lower > 0.0 {
            let scale = n as f64 * std::f64::consts::PI / (2.0 * eps);
            return Ok(DecayBound {
                witness,
                epsilon: eps,
                m_lower,
                bound: scale * scale - lambda * m_lower,
            });
        }
    }
    Err(Error::Precondition(format!(
        "no comparison interval around x = {witness} keeps {m} positive"
    )))
}

/// `exp(-Sigma_1(lambda))` at sample `index`.
pub fn spectral_radius(sample: &EigencurveSample, index: usize) -> Result<f64> {
    if sample.mode != 1 {
        return Err(Error::Precondition(format!(
            "spectral radius uses the principal curve, got mode {}",
            sample.mode
        )));
    }
    let v = sample.values.get(index).ok_or(Error::IndexOutOfRange {
        index,
        dim: sample.len(),
    })?;
    Ok((-v).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn spectral(m: WeightFunction) -> CurveModel {
        CurveModel::new(m, Scheme::spectral_default()).unwrap()
    }

    #[test]
    fn values_at_zero() {
        let model = spectral(WeightFunction::sine(2));
        let s = sample_curve(&model, 2, (-10.0, 10.0), 0.5, Exec::Parallel).unwrap();
        assert!((s.value_at(0.0).unwrap() - 4.0 * PI * PI).abs() < 1e-8);
        for l in [10.0, 5.0, 2.5] {
            assert!((s.value_at(l).unwrap() - s.value_at(-l).unwrap()).abs() < 1e-6);
        }
        let pa = spectral(WeightFunction::PiecewiseSine);
        assert!((pa.sigma(1, 0.0).unwrap() - PI * PI).abs() < 1e-8);
    }

    #[test]
    fn sequential_and_parallel_sampling_agree() {
        let model = spectral(WeightFunction::sine(2));
        let a = sample_modes(&model, &[1, 2, 3], (-20.0, 20.0), 1.0, Exec::Sequential).unwrap();
        let b = sample_modes(&model, &[1, 2, 3], (-20.0, 20.0), 1.0, Exec::Parallel).unwrap();
        let bits = |s: &[EigencurveSample]| -> Vec<u64> {
            s.iter()
                .flat_map(|c| c.values.iter().chain(&c.d1).chain(&c.d2).map(|v| v.to_bits()))
                .collect()
        };
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn level_sets() {
        let model = spectral(WeightFunction::sine(2));
        let s2 = sample_curve(&model, 2, DEFAULT_RANGE, DEFAULT_STEP, Exec::Parallel).unwrap();
        let r = roots_at_level(&model, &s2, 45.0).unwrap();
        assert_eq!(r.len(), 4);
        assert!((r[0].lambda + r[3].lambda).abs() < 1e-4);
        assert!((r[1].lambda + r[2].lambda).abs() < 1e-4);
        let labels: Vec<_> = r.iter().map(|p| p.label).collect();
        assert_eq!(
            labels,
            [RootLabel::MinusOuter, RootLabel::MinusInner, RootLabel::PlusInner, RootLabel::PlusOuter]
        );
        let signs: Vec<bool> = r.iter().map(|p| p.slope > 0.0).collect();
        assert_eq!(signs, [true, false, true, false]);
        for p in &r {
            assert!((model.sigma(2, p.lambda).unwrap() - 45.0).abs() <= ROOT_TOL);
        }

        let inner = roots_at_level(&model, &s2, 4.0 * PI * PI).unwrap();
        let near_zero: Vec<_> = inner.iter().filter(|p| p.lambda.abs() < 1.0).collect();
        assert_eq!(near_zero.len(), 2);
        assert!(near_zero.iter().all(|p| p.lambda.abs() <= 1e-3));

        let s1 = sample_curve(&model, 1, DEFAULT_RANGE, DEFAULT_STEP, Exec::Parallel).unwrap();
        let r1 = roots_at_level(&model, &s1, 0.0).unwrap();
        assert_eq!(r1.len(), 2);
        assert!(r1[0].lambda < 0.0 && r1[1].lambda > 0.0);
        assert_eq!((r1[0].label, r1[1].label), (RootLabel::Minus, RootLabel::Plus));
    }

    #[test]
    fn maxima() {
        let model = spectral(WeightFunction::sine(2));
        let s = sample_modes(&model, &[1, 2, 3], DEFAULT_RANGE, DEFAULT_STEP, Exec::Parallel).unwrap();
        let m1 = curve_maximum(&model, &s[0]).unwrap();
        assert!((m1.mu_n - PI * PI).abs() < 1e-8);
        assert_eq!(m1.argmax.len(), 1);
        assert!(m1.argmax[0].abs() < 1e-3);
        let m2 = curve_maximum(&model, &s[1]).unwrap();
        assert!(m2.mu_n > 45.0 && m2.mu_n < 54.0, "{}", m2.mu_n);
        assert_eq!(m2.argmax.len(), 2);
        assert!((m2.argmax[0] + m2.argmax[1]).abs() < 1e-3);
        let m3 = curve_maximum(&model, &s[2]).unwrap();
        assert!(m3.mu_n > 110.0 && m3.mu_n < 140.0, "{}", m3.mu_n);

        let narrow = sample_curve(&model, 3, (-20.0, 20.0), 0.5, Exec::Parallel).unwrap();
        assert!(matches!(curve_maximum(&model, &narrow), Err(Error::RangeTooSmall { .. })));
    }

    #[test]
    fn concavity() {
        let model = spectral(WeightFunction::sine(2));
        let s = sample_modes(&model, &[1, 2], DEFAULT_RANGE, DEFAULT_STEP, Exec::Parallel).unwrap();
        assert!(concavity_report(&s[0]).unwrap().globally_concave);
        let r2 = concavity_report(&s[1]).unwrap();
        assert!(!r2.globally_concave);
        // n = 2k: the second-order perturbation sum gives 5 / (24 pi^2)
        let expected = 5.0 / (24.0 * PI * PI);
        assert!((r2.second_diff_at_zero - expected).abs() < 1e-4 * expected, "{}", r2.second_diff_at_zero);

        let m4 = spectral(WeightFunction::sine(4));
        let s4 = sample_curve(&m4, 2, DEFAULT_RANGE, DEFAULT_STEP, Exec::Parallel).unwrap();
        assert!(concavity_report(&s4).unwrap().globally_concave);
    }

    #[test]
    fn decay_bounds() {
        let m = WeightFunction::sine(2);
        let b = decay_bound(&m, 2, 500.0).unwrap();
        assert_eq!(b.witness, 0.25);
        assert_eq!(b.epsilon, 0.2);
        assert!((b.m_lower - (0.1 * PI).sin()).abs() < 1e-12);
        let model = spectral(m.clone());
        assert!(model.sigma(2, 500.0).unwrap() < b.bound);
        let b2 = decay_bound(&m, 2, 1000.0).unwrap();
        assert!(b2.bound < b.bound);
        let c = decay_bound(&WeightFunction::constant(1.0), 1, 3.0).unwrap();
        assert_eq!(c.m_lower, 1.0);
        assert!(matches!(
            decay_bound(&WeightFunction::constant(-1.0), 1, 3.0),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn spectral_radius_values() {
        let model = spectral(WeightFunction::sine(2));
        let s = sample_curve(&model, 1, (-20.0, 20.0), 0.5, Exec::Parallel).unwrap();
        let i0 = s.index_of(0.0).unwrap();
        assert!((spectral_radius(&s, i0).unwrap() - (-PI * PI).exp()).abs() < 1e-12);
        let logs: Vec<f64> = (0..s.len()).map(|i| spectral_radius(&s, i).unwrap().ln()).collect();
        for w in logs.windows(3) {
            assert!(w[0] - 2.0 * w[1] + w[2] >= -1e-8);
        }
        for i in 0..s.len() {
            let j = s.len() - 1 - i;
            assert!((logs[i] - logs[j]).abs() < 1e-8);
        }
        let s2 = sample_curve(&model, 2, (-20.0, 20.0), 0.5, Exec::Parallel).unwrap();
        assert!(matches!(spectral_radius(&s2, 0), Err(Error::Precondition(_))));
    }

    #[test]
    fn schemes_agree_at_lambda_50() {
        let fd = CurveModel::new(WeightFunction::sine(2), Scheme::fd_default()).unwrap();
        let sp = spectral(WeightFunction::sine(2));
        assert!((fd.sigma(1, 50.0).unwrap() - sp.sigma(1, 50.0).unwrap()).abs() < 1e-3);
    }
}
