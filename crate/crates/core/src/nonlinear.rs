//! Finite-difference discretization of
//! `-u'' - mu u = lambda m(x) u - a(x) u^2`, `u(0) = u(1) = 0`,
//! and a damped Newton corrector with an optional bordering constraint.

use serde::{Deserialize, Serialize};

use crate::discretize::{l2_norm, Grid, Tridiagonal};
use crate::eigen::{node_count, tridiagonal::sturm_count, tridiagonal::TridiagonalLu};
use crate::weights::WeightFunction;
use crate::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 25;
const MAX_HALVINGS: usize = 6;
/// Extra iterations spent lowering the raw residual once the scaled one has
/// converged.
const POLISH_ITERATIONS: usize = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    pub u: Vec<f64>,
    pub lambda: f64,
    pub mu: f64,
}

impl StateVector {
    pub fn trivial(len: usize, lambda: f64, mu: f64) -> Self {
        Self {
            u: vec![0.0; len],
            lambda,
            mu,
        }
    }

    pub fn parameter(&self, p: Parameter) -> f64 {
        match p {
            Parameter::Lambda => self.lambda,
            Parameter::Mu => self.mu,
        }
    }

    pub fn set_parameter(&mut self, p: Parameter, v: f64) {
        match p {
            Parameter::Lambda => self.lambda = v,
            Parameter::Mu => self.mu = v,
        }
    }

    /// `u(1 - x)` at `-lambda`: the image under the reflection symmetry when
    /// `m` is odd and `a` even about `x = 1/2`.
    pub fn reflected(&self) -> Self {
        Self {
            u: self.u.iter().rev().copied().collect(),
            lambda: -self.lambda,
            mu: self.mu,
        }
    }
}

/// Which scalar is unknown under a bordering constraint.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Parameter {
    #[default]
    Lambda,
    Mu,
}

/// Scalar equation `h * <w, u> + weight_p * p = rhs` appended to the system.
/// Pseudo-arclength, phase and anchoring conditions are all of this form.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearConstraint {
    pub weight_u: Vec<f64>,
    pub weight_p: f64,
    pub rhs: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Constraint {
    /// Both parameters fixed; plain Newton on `F(u) = 0`.
    FixParameters,
    /// `parameter` becomes an unknown, determined by the extra equation.
    Bordered { parameter: Parameter, equation: LinearConstraint },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionRecord {
    pub state: StateVector,
    pub l2: f64,
    pub node_count: usize,
    /// `||F||_inf`.
    pub residual: f64,
    /// `||F||_inf / max(1, 4 ||u||_inf / h^2)`, the convergence criterion.
    pub scaled_residual: f64,
    /// Number of negative Jacobian eigenvalues.
    pub stability_hint: usize,
    pub iterations: usize,
}

#[derive(Clone, Debug)]
pub struct NonlinearProblem {
    grid: Grid,
    m: WeightFunction,
    a: WeightFunction,
    m_values: Vec<f64>,
    a_values: Vec<f64>,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

impl NonlinearProblem {
    pub fn new(m: WeightFunction, a: WeightFunction, n_interior: usize) -> Result<Self> {
        let grid = Grid::unit(n_interior)?;
        let nodes = grid.nodes();
        Ok(Self {
            m_values: m.sample(&nodes),
            a_values: a.sample(&nodes),
            grid,
            m,
            a,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.grid.len()
    }

    pub fn m(&self) -> &WeightFunction {
        &self.m
    }

    pub fn a(&self) -> &WeightFunction {
        &self.a
    }

    pub fn m_values(&self) -> &[f64] {
        &self.m_values
    }

    pub fn a_values(&self) -> &[f64] {
        &self.a_values
    }

    fn check(&self, s: &StateVector) -> Result<()> {
        if s.u.len() != self.dim() {
            return Err(Error::Config(format!(
                "state has {} values, grid has {} interior points",
                s.u.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// `F_i = (-u_{i-1} + 2u_i - u_{i+1})/h^2 - mu u_i - lambda m_i u_i + a_i u_i^2`.
    pub fn residual(&self, s: &StateVector) -> Vec<f64> {
        let u = &s.u;
        let n = u.len();
        let inv_h2 = 1.0 / (self.grid.h() * self.grid.h());
        (0..n)
            .map(|i| {
                let left = if i > 0 { u[i - 1] } else { 0.0 };
                let right = if i + 1 < n { u[i + 1] } else { 0.0 };
                (2.0 * u[i] - left - right) * inv_h2 - s.mu * u[i] - s.lambda * self.m_values[i] * u[i]
                    + self.a_values[i] * u[i] * u[i]
            })
            .collect()
    }

    /// Symmetric tridiagonal `dF/du`: diagonal `2/h^2 - mu - lambda m + 2 a u`.
    pub fn jacobian(&self, s: &StateVector) -> Tridiagonal {
        let h2 = self.grid.h() * self.grid.h();
        let diag = (0..self.dim())
            .map(|i| 2.0 / h2 - s.mu - s.lambda * self.m_values[i] + 2.0 * self.a_values[i] * s.u[i])
            .collect();
        Tridiagonal::new(diag, vec![-1.0 / h2; self.dim() - 1])
    }

    /// `dF/dp` for the chosen parameter.
    pub fn parameter_derivative(&self, s: &StateVector, p: Parameter) -> Vec<f64> {
        match p {
            Parameter::Lambda => s.u.iter().zip(&self.m_values).map(|(u, m)| -m * u).collect(),
            Parameter::Mu => s.u.iter().map(|u| -u).collect(),
        }
    }

    /// Normalization for the scaled residual: the size of the largest term of
    /// the discrete operator applied to `u`.
    pub fn residual_scale(&self, s: &StateVector) -> f64 {
        let h2 = self.grid.h() * self.grid.h();
        (4.0 * inf_norm(&s.u) / h2).max(1.0)
    }

    pub fn l2(&self, u: &[f64]) -> f64 {
        l2_norm(u, &self.grid)
    }

    /// `h * sum u v`.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        crate::discretize::inner(u, v, &self.grid)
    }

    pub fn record(&self, state: StateVector, iterations: usize) -> SolutionRecord {
        let f = self.residual(&state);
        let residual = inf_norm(&f);
        let scaled = residual / self.residual_scale(&state);
        let stability_hint = sturm_count(&self.jacobian(&state), 0.0);
        SolutionRecord {
            l2: self.l2(&state.u),
            node_count: node_count(&state.u),
            residual,
            scaled_residual: scaled,
            stability_hint,
            iterations,
            state,
        }
    }

    fn constraint_residual(&self, s: &StateVector, c: &Constraint) -> f64 {
        match c {
            Constraint::FixParameters => 0.0,
            Constraint::Bordered { parameter, equation } => {
                self.inner(&equation.weight_u, &s.u) + equation.weight_p * s.parameter(*parameter) - equation.rhs
            }
        }
    }

    /// One Newton direction `(du, dp)`.
    fn newton_direction(&self, s: &StateVector, f: &[f64], g: f64, c: &Constraint) -> Result<(Vec<f64>, f64)> {
        let jac = self.jacobian(s);
        let lu = TridiagonalLu::factor_shifted(&jac, 0.0);
        let tiny = 1e3 * f64::EPSILON * jac.norm_inf();
        match c {
            Constraint::FixParameters => {
                if lu.min_pivot() <= tiny {
                    return Err(Error::Singular(format!(
                        "Jacobian singular at lambda = {}, mu = {}",
                        s.lambda, s.mu
                    )));
                }
                let mut du: Vec<f64> = f.iter().map(|v| -v).collect();
                lu.solve_in_place(&mut du);
                Ok((du, 0.0))
            }
            Constraint::Bordered { parameter, equation } => {
                // Bordering: J a = -F, J b = F_p, then eliminate dp; one step of
                // iterative refinement on the full bordered system follows.
                let fp = self.parameter_derivative(s, *parameter);
                let h = self.grid.h();
                let gu: Vec<f64> = equation.weight_u.iter().map(|w| h * w).collect();
                let gp = equation.weight_p;
                let solve = |rhs_u: &[f64], rhs_g: f64| -> Result<(Vec<f64>, f64)> {
                    let mut a: Vec<f64> = rhs_u.to_vec();
                    lu.solve_in_place(&mut a);
                    let mut b = fp.clone();
                    lu.solve_in_place(&mut b);
                    let dot = |x: &[f64]| gu.iter().zip(x).map(|(p, q)| p * q).sum::<f64>();
                    let denom = gp - dot(&b);
                    let scale = gp.abs() + gu.iter().map(|v| v.abs()).sum::<f64>() * inf_norm(&b);
                    if !denom.is_finite() || denom.abs() <= 1e-14 * scale.max(f64::MIN_POSITIVE) {
                        return Err(Error::Singular("bordered system is singular".into()));
                    }
                    let dp = (rhs_g - dot(&a)) / denom;
                    let du = a.iter().zip(&b).map(|(a, b)| a - dp * b).collect();
                    Ok((du, dp))
                };
                let rhs_u: Vec<f64> = f.iter().map(|v| -v).collect();
                let (mut du, mut dp) = solve(&rhs_u, -g)?;
                // refinement: residual of [J fp; gu gp] [du; dp] = [-F; -g]
                let jdu = jac.mul_vec(&du);
                let r_u: Vec<f64> = (0..du.len()).map(|i| rhs_u[i] - jdu[i] - fp[i] * dp).collect();
                let r_g = -g - gu.iter().zip(&du).map(|(p, q)| p * q).sum::<f64>() - gp * dp;
                let (cu, cp) = solve(&r_u, r_g)?;
                du.iter_mut().zip(&cu).for_each(|(d, c)| *d += c);
                dp += cp;
                Ok((du, dp))
            }
        }
    }

    fn merit(&self, s: &StateVector, c: &Constraint) -> (f64, f64, f64) {
        let raw = inf_norm(&self.residual(s));
        let scaled = raw / self.residual_scale(s);
        let g = self.constraint_residual(s, c).abs();
        (scaled, raw, g)
    }

    /// Damped Newton from `initial`. Converged when the scaled residual and
    /// the constraint residual are both below `opts.tol`; up to two further
    /// iterations then try to bring the raw residual below `opts.tol` too.
    pub fn newton_correct(&self, initial: &StateVector, constraint: &Constraint, opts: NewtonOptions) -> Result<SolutionRecord> {
        self.check(initial)?;
        if let Constraint::Bordered { equation, .. } = constraint {
            if equation.weight_u.len() != self.dim() {
                return Err(Error::Config("constraint length does not match the grid".into()));
            }
        }
        if !(opts.tol > 0.0) || opts.max_iter == 0 {
            return Err(Error::Config("Newton needs tol > 0 and max_iter >= 1".into()));
        }
        let g_tol = |s: &StateVector| -> f64 {
            match constraint {
                Constraint::FixParameters => f64::INFINITY,
                Constraint::Bordered { equation, .. } => {
                    opts.tol * (1.0 + equation.rhs.abs() + self.l2(&s.u) + s.lambda.abs().max(s.mu.abs()))
                }
            }
        };
        let mut s = initial.clone();
        let mut history = Vec::new();
        let (mut scaled, mut raw, mut g) = self.merit(&s, constraint);
        history.push(scaled.max(g));
        let mut converged_at: Option<usize> = None;
        let mut best: Option<(StateVector, f64)> = None;
        let mut iter = 0;
        loop {
            if scaled <= opts.tol && g <= g_tol(&s) {
                if converged_at.is_none() {
                    converged_at = Some(iter);
                }
                if best.as_ref().is_none_or(|b| raw < b.1) {
                    best = Some((s.clone(), raw));
                }
                if raw <= opts.tol || iter >= converged_at.unwrap_or(0) + POLISH_ITERATIONS {
                    break;
                }
            }
            if iter >= opts.max_iter + POLISH_ITERATIONS || (converged_at.is_none() && iter >= opts.max_iter) {
                break;
            }
            let f = self.residual(&s);
            let gs = self.constraint_residual(&s, constraint);
            let (du, dp) = self.newton_direction(&s, &f, gs, constraint)?;
            let current = scaled.max(g);
            let mut t = 1.0;
            let mut trial;
            let mut halvings = 0;
            loop {
                trial = s.clone();
                trial.u.iter_mut().zip(&du).for_each(|(u, d)| *u += t * d);
                if let Constraint::Bordered { parameter, .. } = constraint {
                    let p = trial.parameter(*parameter);
                    trial.set_parameter(*parameter, p + t * dp);
                }
                let (ts, _, tg) = self.merit(&trial, constraint);
                if (ts.max(tg) < current && ts.is_finite()) || halvings >= MAX_HALVINGS || current == 0.0 {
                    break;
                }
                t *= 0.5;
                halvings += 1;
            }
            s = trial;
            (scaled, raw, g) = self.merit(&s, constraint);
            history.push(scaled.max(g));
            iter += 1;
            if !scaled.is_finite() {
                break;
            }
        }
        match (converged_at, best) {
            (Some(_), Some((state, _))) => Ok(self.record(state, iter)),
            _ => Err(Error::Divergence {
                history,
                last_u: s.u,
                last_lambda: s.lambda,
                last_mu: s.mu,
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigencurve::CurveModel;
    use crate::discretize::Scheme;
    use crate::eigen::Normalization;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn problem(n: usize) -> NonlinearProblem {
        NonlinearProblem::new(WeightFunction::sine(2), WeightFunction::PiecewiseSine, n).unwrap()
    }

    #[test]
    fn trivial_state_has_zero_residual() {
        let p = problem(100);
        let s = StateVector::trivial(100, 12.0, 3.0);
        assert!(p.residual(&s).iter().all(|v| *v == 0.0));
        let r = p.newton_correct(&s, &Constraint::FixParameters, NewtonOptions::default()).unwrap();
        assert_eq!(r.l2, 0.0);
        assert_eq!(r.iterations, 0);
    }

    #[test]
    fn linear_case_reduces_to_the_eigenproblem() {
        let n = 400;
        let p = NonlinearProblem::new(WeightFunction::sine(2), WeightFunction::constant(0.0), n).unwrap();
        let model = CurveModel::new(WeightFunction::sine(2), Scheme::FiniteDifference { n_interior: n }).unwrap();
        let pair = model.eigenpair(2, 30.0, Normalization::UnitL2).unwrap();
        let s = StateVector {
            u: pair.function,
            lambda: 30.0,
            mu: pair.value,
        };
        assert!(inf_norm(&p.residual(&s)) / p.residual_scale(&s) < 1e-9);
    }

    #[test]
    fn logistic_residual_at_midpoint() {
        let n = 999;
        let p = NonlinearProblem::new(WeightFunction::constant(1.0), WeightFunction::constant(1.0), n).unwrap();
        let (c, lambda) = (0.3, 4.0);
        let u: Vec<f64> = p.grid().nodes().iter().map(|x| c * (PI * x).sin()).collect();
        let f = p.residual(&StateVector { u, lambda, mu: 0.0 });
        let expected = (PI * PI - lambda) * c + c * c;
        assert!((f[499] - expected).abs() < 1e-4);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let p = problem(60);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let s = StateVector {
                u: (0..60).map(|_| rng.random_range(-2.0..2.0)).collect(),
                lambda: rng.random_range(-50.0..50.0),
                mu: rng.random_range(0.0..40.0),
            };
            let dir: Vec<f64> = (0..60).map(|_| rng.random_range(-1.0..1.0)).collect();
            let eps = 1e-6;
            let mut plus = s.clone();
            let mut minus = s.clone();
            plus.u.iter_mut().zip(&dir).for_each(|(u, d)| *u += eps * d);
            minus.u.iter_mut().zip(&dir).for_each(|(u, d)| *u -= eps * d);
            let fd: Vec<f64> = p.residual(&plus).iter().zip(p.residual(&minus)).map(|(a, b)| (a - b) / (2.0 * eps)).collect();
            let jd = p.jacobian(&s).mul_vec(&dir);
            let scale = inf_norm(&jd).max(1.0);
            for (a, b) in fd.iter().zip(&jd) {
                assert!((a - b).abs() < 1e-6 * scale);
            }
        }
    }

    #[test]
    fn jacobian_at_zero_matches_eigencurve() {
        let n = 300;
        let p = problem(n);
        let model = CurveModel::new(WeightFunction::sine(2), Scheme::FiniteDifference { n_interior: n }).unwrap();
        let (lambda, mu) = (40.0, 30.0);
        let jac = p.jacobian(&StateVector::trivial(n, lambda, mu));
        for k in 1..=4 {
            let ev = crate::eigen::tridiagonal::bisect_nth(&jac, k, 1e-10).unwrap();
            assert!((ev - (model.sigma(k, lambda).unwrap() - mu)).abs() < 1e-8);
        }
        let below = (1..=10).filter(|&k| model.sigma(k, lambda).unwrap() < mu).count();
        assert_eq!(p.record(StateVector::trivial(n, lambda, mu), 0).stability_hint, below);
    }

    #[test]
    fn logistic_amplitude_scales_linearly() {
        // Leading order: u ~ c sin(pi x) with c = delta int sin^2 / int sin^3,
        // so l2 / delta -> 3 pi / (8 sqrt 2).
        let n = 400;
        let p = NonlinearProblem::new(WeightFunction::constant(1.0), WeightFunction::constant(1.0), n).unwrap();
        let h = p.grid().h();
        let sigma_h = 2.0 / (h * h) * (1.0 - (PI * h).cos());
        let limit = 3.0 * PI / (8.0 * 2f64.sqrt());
        let mut errors = Vec::new();
        for delta in [0.4, 0.2, 0.1] {
            let lambda = sigma_h + delta;
            let u0: Vec<f64> = p.grid().nodes().iter().map(|x| delta * (PI * x).sin()).collect();
            let r = p
                .newton_correct(&StateVector { u: u0, lambda, mu: 0.0 }, &Constraint::FixParameters, NewtonOptions::default())
                .unwrap();
            assert_eq!(r.node_count, 0);
            assert!(r.state.u.iter().all(|v| *v > 0.0));
            errors.push((r.l2 / delta - limit).abs());
        }
        assert!(errors[0] > errors[1] && errors[1] > errors[2], "{errors:?}");
        assert!(errors[2] < 1e-3);
    }

    #[test]
    fn bordered_newton_finds_one_node_solution() {
        let n = 2000;
        let p = problem(n);
        let model = CurveModel::new(WeightFunction::sine(2), Scheme::FiniteDifference { n_interior: n }).unwrap();
        let sample = crate::eigencurve::sample_curve(&model, 2, (0.0, 300.0), 1.0, crate::parallel::Exec::Parallel).unwrap();
        let roots = crate::eigencurve::roots_at_level(&model, &sample, 35.0).unwrap();
        let bp = roots[0].lambda;
        let phi = model.eigenpair(2, bp, Normalization::UnitL2).unwrap().function;
        let start = StateVector {
            u: phi.iter().map(|v| 0.01 * v).collect(),
            lambda: bp,
            mu: 35.0,
        };
        let c = Constraint::Bordered {
            parameter: Parameter::Lambda,
            equation: LinearConstraint {
                weight_u: phi.clone(),
                weight_p: 0.0,
                rhs: 0.01,
            },
        };
        let r = p.newton_correct(&start, &c, NewtonOptions::default()).unwrap();
        assert_eq!(r.node_count, 1);
        assert!(r.residual <= 1e-10, "{}", r.residual);
        assert!(r.l2 > 0.005 && r.l2 < 0.02);
    }

    #[test]
    fn divergence_is_reported() {
        let p = problem(50);
        let s = StateVector {
            u: vec![1e6; 50],
            lambda: 0.0,
            mu: 0.0,
        };
        let err = p
            .newton_correct(&s, &Constraint::FixParameters, NewtonOptions { tol: 1e-14, max_iter: 2 })
            .unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }));
    }
}
