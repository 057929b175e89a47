//! Pseudo-arclength continuation of nodal solution branches.
//!
//! Branches start at bifurcation points from `u = 0` (roots of
//! `Sigma_n(lambda) = mu`), are followed with a secant predictor and a
//! bordered Newton corrector, and end on one of the [`Termination`] events.
//! Components detached from `u = 0` are reached by continuing an attached
//! branch in `mu` ([`mu_homotopy`]).

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::eigen::Normalization;
use crate::eigencurve::{roots_at_level, sample_modes, BifurcationPoint, CurveModel};
use crate::nonlinear::{Constraint, LinearConstraint, NewtonOptions, NonlinearProblem, Parameter, SolutionRecord, StateVector};
use crate::parallel::{self, Exec};
use crate::{Error, Result};

/// A branch landing within this L2 norm of `u = 0` counts as reconnected.
pub const RECONNECT_L2: f64 = 1e-6;
/// ... and within this distance in lambda of the bifurcation value.
pub const RECONNECT_LAMBDA: f64 = 1e-3;
/// Amplitude of the landing solution next to a bifurcation point.
const LANDING_AMPLITUDE: f64 = 1e-8;
/// Minimum slope `|Sigma_n'|` for a transversal crossing.
pub const TRANSVERSALITY_TOL: f64 = 1e-8;
/// Allowed `|Sigma_n(lambda) - mu|` at a branch-switching anchor.
pub const ANCHOR_TOL: f64 = 1e-6;
const MIN_LOOP_STEPS: usize = 10;
const LOOP_ALIGNMENT: f64 = 0.9;
const GROWTH: f64 = 1.3;
const GROWTH_AFTER: usize = 4;
const MAX_SUBDIVISIONS: usize = 6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContinuationConfig {
    /// Initial arclength step.
    pub ds: f64,
    pub ds_min: f64,
    pub ds_max: f64,
    /// Newton tolerance on the scaled residual.
    pub tol: f64,
    pub newton_max_iter: usize,
    pub max_points: usize,
    pub lambda_window: (f64, f64),
    /// Tracing stops once the L2 norm exceeds this and is still growing.
    pub norm_cap: f64,
    /// L2 amplitude of the first point after branch switching.
    pub amplitude: f64,
    /// A sign flip of `u` counts as passing through `u = 0` only when the
    /// previous point is closer than this (in L2) to the trivial solution.
    pub reconnect_radius: f64,
    /// Lambda window and step of the eigencurve scan for bifurcation values.
    pub detection_range: (f64, f64),
    pub detection_step: f64,
}

impl Default for ContinuationConfig {
    fn default() -> Self {
        Self {
            ds: 0.1,
            ds_min: 1e-5,
            ds_max: 2.0,
            tol: crate::nonlinear::DEFAULT_TOL,
            newton_max_iter: 10,
            max_points: 4000,
            lambda_window: (-600.0, 600.0),
            norm_cap: 50.0,
            amplitude: 1e-3,
            reconnect_radius: 2.0,
            detection_range: (-600.0, 600.0),
            detection_step: 1.0,
        }
    }
}

impl ContinuationConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(format!("continuation: {msg}")));
        if !(self.ds_min > 0.0 && self.ds_min <= self.ds && self.ds <= self.ds_max) {
            return bad("need 0 < ds_min <= ds <= ds_max");
        }
        if !(self.tol > 0.0) || self.newton_max_iter == 0 {
            return bad("need tol > 0 and newton_max_iter >= 1");
        }
        if self.max_points < 2 {
            return bad("max_points must be at least 2");
        }
        if !(self.lambda_window.0 < self.lambda_window.1) || !(self.detection_range.0 < self.detection_range.1) {
            return bad("empty lambda window");
        }
        if !(self.norm_cap > 0.0 && self.amplitude > 0.0 && self.reconnect_radius > 0.0 && self.detection_step > 0.0) {
            return bad("norm_cap, amplitude, reconnect_radius and detection_step must be positive");
        }
        Ok(())
    }

    fn newton(&self) -> NewtonOptions {
        NewtonOptions {
            tol: self.tol,
            max_iter: self.newton_max_iter,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Termination {
    LambdaRangeExit,
    NormCap,
    StepFloor,
    ClosedLoop,
    TrivialReconnect { point: BifurcationPoint, anchor: usize },
    /// Passed through `u = 0` away from every known bifurcation value.
    UnmatchedCrossing { lambda: f64 },
    MaxPoints,
    /// A parameter continuation reached its target value.
    TargetReached,
    HomotopyFailed { mu: f64, reason: String },
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Termination::LambdaRangeExit => f.write_str("lambda-range-exit"),
            Termination::NormCap => f.write_str("norm-cap"),
            Termination::StepFloor => f.write_str("step-floor"),
            Termination::ClosedLoop => f.write_str("closed-loop"),
            Termination::TrivialReconnect { point, .. } => write!(f, "trivial-reconnect({:.6})", point.lambda),
            Termination::UnmatchedCrossing { lambda } => write!(f, "unmatched-crossing({lambda:.6})"),
            Termination::MaxPoints => f.write_str("max-points"),
            Termination::TargetReached => f.write_str("target-reached"),
            Termination::HomotopyFailed { mu, .. } => write!(f, "homotopy-failed({mu})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BranchOrigin {
    TrivialBifurcation { point: BifurcationPoint, anchor: usize, side: i8 },
    MuHomotopy { source: String, mu_path: Vec<f64> },
    Manual,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub id: String,
    pub mu: f64,
    pub origin: BranchOrigin,
    pub points: Vec<SolutionRecord>,
    pub termination: Termination,
    /// End event of the backward half for branches traced in both directions.
    pub backward_termination: Option<Termination>,
    pub notes: Vec<String>,
}

impl Branch {
    pub fn node_count(&self) -> Option<usize> {
        self.points.first().map(|p| p.node_count)
    }

    pub fn min_l2(&self) -> f64 {
        self.points.iter().map(|p| p.l2).fold(f64::INFINITY, f64::min)
    }

    pub fn max_l2_index(&self) -> Option<usize> {
        (0..self.points.len()).max_by(|&i, &j| self.points[i].l2.total_cmp(&self.points[j].l2))
    }

    pub fn terminations(&self) -> impl Iterator<Item = &Termination> {
        std::iter::once(&self.termination).chain(self.backward_termination.as_ref())
    }

    /// Anchors at which this branch touches `u = 0`.
    pub fn attachments(&self) -> Vec<usize> {
        let mut out = Vec::new();
        if let BranchOrigin::TrivialBifurcation { anchor, .. } = self.origin {
            out.push(anchor);
        }
        for t in self.terminations() {
            if let Termination::TrivialReconnect { anchor, .. } = t {
                out.push(*anchor);
            }
        }
        out
    }

    pub fn reconnects(&self) -> bool {
        self.terminations().any(|t| matches!(t, Termination::TrivialReconnect { .. }))
    }
}

/// A bifurcation point prepared for branch switching on a given grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Anchor {
    pub point: BifurcationPoint,
    /// `phi_n(lambda*)` on the problem grid, unit L2 norm, positive slope at 0.
    pub phi: Vec<f64>,
    /// First-order lambda correction `<phi, a phi^2> / <phi, m phi>`.
    pub lambda1: f64,
}

impl Anchor {
    /// `model` must be the finite-difference eigencurve on the problem grid.
    pub fn new(problem: &NonlinearProblem, model: &CurveModel, point: &BifurcationPoint) -> Result<Self> {
        let n = point.mode;
        let sigma = model.sigma(n, point.lambda)?;
        if (sigma - point.mu).abs() > ANCHOR_TOL {
            return Err(Error::Precondition(format!(
                "lambda = {} is not a root: Sigma_{n} - mu = {:.3e}",
                point.lambda,
                sigma - point.mu
            )));
        }
        if point.slope.abs() < TRANSVERSALITY_TOL {
            return Err(Error::Transversality {
                lambda: point.lambda,
                slope: point.slope,
            });
        }
        let pair = model.eigenpair(n, point.lambda, Normalization::UnitL2)?;
        if pair.function.len() != problem.dim() {
            return Err(Error::Config(
                "anchor eigenfunction and nonlinear problem use different grids".into(),
            ));
        }
        let phi = pair.function;
        let cubic: Vec<f64> = phi.iter().zip(problem.a_values()).map(|(p, a)| a * p * p).collect();
        let weighted: Vec<f64> = phi.iter().zip(problem.m_values()).map(|(p, m)| m * p).collect();
        let lambda1 = problem.inner(&phi, &cubic) / problem.inner(&phi, &weighted);
        Ok(Self {
            point: point.clone(),
            phi,
            lambda1,
        })
    }
}

/// Predictor `u = eps phi`, `lambda = lambda* + eps lambda1` off the trivial
/// solution at `anchor`.
pub fn branch_switch(anchor: &Anchor, epsilon: f64) -> StateVector {
    StateVector {
        u: anchor.phi.iter().map(|p| epsilon * p).collect(),
        lambda: anchor.point.lambda + epsilon * anchor.lambda1,
        mu: anchor.point.mu,
    }
}

/// Branch-switching predictor corrected under `<phi, u> = eps`, which keeps
/// Newton away from the trivial solution.
pub fn switch_and_correct(problem: &NonlinearProblem, anchor: &Anchor, epsilon: f64, cfg: &ContinuationConfig) -> Result<SolutionRecord> {
    let constraint = Constraint::Bordered {
        parameter: Parameter::Lambda,
        equation: LinearConstraint {
            weight_u: anchor.phi.clone(),
            weight_p: 0.0,
            rhs: epsilon,
        },
    };
    let mut opts = cfg.newton();
    opts.max_iter = opts.max_iter.max(crate::nonlinear::DEFAULT_MAX_ITER);
    let rec = problem.newton_correct(&branch_switch(anchor, epsilon), &constraint, opts)?;
    if rec.node_count + 1 != anchor.point.mode {
        return Err(Error::Consistency(format!(
            "branch switched at lambda = {} has {} nodes, expected {}",
            anchor.point.lambda,
            rec.node_count,
            anchor.point.mode - 1
        )));
    }
    Ok(rec)
}

/// Direction in `(u, p)` space, unit length in the metric `h sum du^2 + dp^2`.
#[derive(Clone, Debug, PartialEq)]
struct Tangent {
    du: Vec<f64>,
    dp: f64,
}

impl Tangent {
    fn normalized(problem: &NonlinearProblem, du: Vec<f64>, dp: f64) -> Option<Self> {
        let norm = (problem.inner(&du, &du) + dp * dp).sqrt();
        (norm > 0.0 && norm.is_finite()).then(|| Self {
            du: du.iter().map(|v| v / norm).collect(),
            dp: dp / norm,
        })
    }

    fn negated(&self) -> Self {
        Self {
            du: self.du.iter().map(|v| -v).collect(),
            dp: -self.dp,
        }
    }

    fn dot(&self, problem: &NonlinearProblem, other: &Tangent) -> f64 {
        problem.inner(&self.du, &other.du) + self.dp * other.dp
    }
}

struct Tracer<'a> {
    problem: &'a NonlinearProblem,
    cfg: &'a ContinuationConfig,
    anchors: &'a [Anchor],
    parameter: Parameter,
    /// Stop when the free parameter crosses this value.
    stop_at: Option<f64>,
}

impl Tracer<'_> {
    fn distance(&self, a: &StateVector, b: &StateVector) -> f64 {
        let du: Vec<f64> = a.u.iter().zip(&b.u).map(|(x, y)| x - y).collect();
        let dp = a.parameter(self.parameter) - b.parameter(self.parameter);
        (self.problem.inner(&du, &du) + dp * dp).sqrt()
    }

    fn secant(&self, from: &StateVector, to: &StateVector) -> Option<Tangent> {
        let du = to.u.iter().zip(&from.u).map(|(b, a)| b - a).collect();
        Tangent::normalized(self.problem, du, to.parameter(self.parameter) - from.parameter(self.parameter))
    }

    fn run(&self, start: SolutionRecord, tangent: Tangent) -> (Vec<SolutionRecord>, Termination) {
        let cfg = self.cfg;
        let nodes = start.node_count;
        let origin = start.state.clone();
        let t0 = tangent.clone();
        let mut t = tangent;
        let mut points = vec![start];
        let mut ds = cfg.ds;
        let mut streak = 0;
        let mut farthest = 0.0f64;
        loop {
            if points.len() >= cfg.max_points {
                return (points, Termination::MaxPoints);
            }
            let current = points.last().expect("nonempty").clone();
            let cur = &current.state;
            let mut predicted = cur.clone();
            predicted.u.iter_mut().zip(&t.du).for_each(|(u, d)| *u += ds * d);
            let p = cur.parameter(self.parameter);
            predicted.set_parameter(self.parameter, p + ds * t.dp);
            let rhs = self.problem.inner(&t.du, &cur.u) + t.dp * p + ds;
            let constraint = Constraint::Bordered {
                parameter: self.parameter,
                equation: LinearConstraint {
                    weight_u: t.du.clone(),
                    weight_p: t.dp,
                    rhs,
                },
            };
            let corrected = self.problem.newton_correct(&predicted, &constraint, cfg.newton()).ok();
            let accepted = corrected.filter(|rec| self.distance(&rec.state, cur) <= 2.0 * ds);
            let Some(rec) = accepted else {
                ds *= 0.5;
                streak = 0;
                if ds < cfg.ds_min {
                    return (points, Termination::StepFloor);
                }
                continue;
            };

            let crossed = self.problem.inner(&cur.u, &rec.state.u) < 0.0 || rec.l2 <= RECONNECT_L2;
            if crossed && current.l2 < cfg.reconnect_radius {
                let termination = self.reconnect(&current, &rec, &mut points);
                return (points, termination);
            }
            if rec.node_count != nodes {
                ds *= 0.5;
                streak = 0;
                if ds < cfg.ds_min {
                    return (points, Termination::StepFloor);
                }
                continue;
            }

            let next_t = self.secant(cur, &rec.state).unwrap_or_else(|| t.clone());
            let lambda = rec.state.lambda;
            let grows = rec.l2 > current.l2;
            let crossed_target = self.stop_at.is_some_and(|target| {
                let before = cur.parameter(self.parameter) - target;
                let after = rec.state.parameter(self.parameter) - target;
                before.signum() != after.signum() || after == 0.0
            });
            points.push(rec);
            if crossed_target {
                return (points, Termination::TargetReached);
            }
            if lambda < cfg.lambda_window.0 || lambda > cfg.lambda_window.1 {
                return (points, Termination::LambdaRangeExit);
            }
            let last = points.last().expect("just pushed");
            if last.l2 > cfg.norm_cap && grows {
                return (points, Termination::NormCap);
            }
            let d0 = self.distance(&last.state, &origin);
            farthest = farthest.max(d0);
            if points.len() > MIN_LOOP_STEPS
                && d0 < 10.0 * ds
                && farthest > 30.0 * cfg.ds.max(d0 / 10.0)
                && next_t.dot(self.problem, &t0) > LOOP_ALIGNMENT
            {
                return (points, Termination::ClosedLoop);
            }
            t = next_t;
            streak += 1;
            if streak >= GROWTH_AFTER {
                ds = (ds * GROWTH).min(cfg.ds_max);
                streak = 0;
            }
        }
    }

    /// The step from `prev` to `next` passed through `u = 0`. Identify the
    /// bifurcation value and land next to it on the branch.
    fn reconnect(&self, prev: &SolutionRecord, next: &SolutionRecord, points: &mut Vec<SolutionRecord>) -> Termination {
        let a = self.problem.inner(&prev.state.u, &prev.state.u);
        let b = self.problem.inner(&prev.state.u, &next.state.u);
        let s = if a - b > 0.0 { (a / (a - b)).clamp(0.0, 1.0) } else { 1.0 };
        let crossing = prev.state.lambda + s * (next.state.lambda - prev.state.lambda);
        if self.parameter != Parameter::Lambda {
            return Termination::UnmatchedCrossing { lambda: crossing };
        }
        let mode = prev.node_count + 1;
        let window = 1.0f64.max(0.02 * crossing.abs()).max(self.cfg.ds_max);
        let nearest = self
            .anchors
            .iter()
            .enumerate()
            .filter(|(_, an)| an.point.mode == mode && (an.point.lambda - crossing).abs() <= window)
            .min_by(|x, y| {
                (x.1.point.lambda - crossing)
                    .abs()
                    .total_cmp(&(y.1.point.lambda - crossing).abs())
            });
        let Some((index, anchor)) = nearest else {
            return Termination::UnmatchedCrossing { lambda: crossing };
        };
        let side = self.problem.inner(&anchor.phi, &prev.state.u).signum();
        let amplitude = side * LANDING_AMPLITUDE;
        let landed = switch_and_correct(self.problem, anchor, amplitude, self.cfg).ok().filter(|rec| {
            rec.l2 < RECONNECT_L2 && (rec.state.lambda - anchor.point.lambda).abs() < RECONNECT_LAMBDA
        });
        match landed {
            Some(rec) => {
                points.push(rec);
                Termination::TrivialReconnect {
                    point: anchor.point.clone(),
                    anchor: index,
                }
            }
            None => Termination::UnmatchedCrossing { lambda: crossing },
        }
    }
}

fn side_name(side: i8) -> &'static str {
    if side > 0 {
        "pos"
    } else {
        "neg"
    }
}

/// Bifurcation values for each mode at level `mu`, merged and sorted by lambda.
pub fn detect_bifurcation_values(
    model: &CurveModel,
    mu: f64,
    modes: &[usize],
    range: (f64, f64),
    step: f64,
    exec: Exec,
) -> Result<Vec<BifurcationPoint>> {
    let samples = sample_modes(model, modes, range, step, exec)?;
    let mut out = Vec::new();
    for s in &samples {
        out.extend(roots_at_level(model, s, mu)?);
    }
    out.sort_by(|a, b| a.lambda.total_cmp(&b.lambda).then(a.mode.cmp(&b.mode)));
    Ok(out)
}

/// Trace the half-branch leaving `anchors[index]` on `side` (+1 along `phi`,
/// -1 along `-phi`).
pub fn trace_from_bifurcation(
    problem: &NonlinearProblem,
    anchors: &[Anchor],
    index: usize,
    side: i8,
    cfg: &ContinuationConfig,
) -> Result<Branch> {
    cfg.validate()?;
    let anchor = anchors.get(index).ok_or(Error::IndexOutOfRange {
        index,
        dim: anchors.len(),
    })?;
    let sign = if side >= 0 { 1.0 } else { -1.0 };
    let start = switch_and_correct(problem, anchor, sign * cfg.amplitude, cfg)?;
    let du: Vec<f64> = anchor.phi.iter().map(|p| sign * p).collect();
    let tangent = Tangent::normalized(problem, du, sign * anchor.lambda1)
        .ok_or_else(|| Error::Singular("zero branch direction".into()))?;
    let tracer = Tracer {
        problem,
        cfg,
        anchors,
        parameter: Parameter::Lambda,
        stop_at: None,
    };
    let (points, termination) = tracer.run(start, tangent);
    Ok(Branch {
        id: format!(
            "mu{}-mode{}-{}-{}",
            anchor.point.mu, anchor.point.mode, anchor.point.label, side_name(side)
        ),
        mu: anchor.point.mu,
        origin: BranchOrigin::TrivialBifurcation {
            point: anchor.point.clone(),
            anchor: index,
            side: sign as i8,
        },
        points,
        termination,
        backward_termination: None,
        notes: Vec::new(),
    })
}

/// Trace a branch through a converged `start` in both lambda directions.
pub fn trace(
    problem: &NonlinearProblem,
    start: &StateVector,
    anchors: &[Anchor],
    cfg: &ContinuationConfig,
    origin: BranchOrigin,
    id: String,
) -> Result<Branch> {
    cfg.validate()?;
    let rec = problem.newton_correct(start, &Constraint::FixParameters, cfg.newton())?;
    let tangent = parameter_tangent(problem, &rec.state, Parameter::Lambda);
    let tracer = Tracer {
        problem,
        cfg,
        anchors,
        parameter: Parameter::Lambda,
        stop_at: None,
    };
    let (forward, termination) = tracer.run(rec.clone(), tangent.clone());
    let (backward, back_termination) = tracer.run(rec, tangent.negated());
    let mut points: Vec<SolutionRecord> = backward.into_iter().skip(1).rev().collect();
    points.extend(forward);
    Ok(Branch {
        id,
        mu: start.mu,
        origin,
        points,
        termination,
        backward_termination: Some(back_termination),
        notes: Vec::new(),
    })
}

/// `(du/dp, 1)` from `J du = -F_p`, normalized; falls back to the pure
/// parameter direction when the Jacobian is singular.
fn parameter_tangent(problem: &NonlinearProblem, s: &StateVector, p: Parameter) -> Tangent {
    let jac = problem.jacobian(s);
    let lu = crate::eigen::tridiagonal::TridiagonalLu::factor_shifted(&jac, 0.0);
    let mut du: Vec<f64> = problem.parameter_derivative(s, p).iter().map(|v| -v).collect();
    lu.solve_in_place(&mut du);
    if lu.min_pivot() > 1e3 * f64::EPSILON * jac.norm_inf() && du.iter().all(|v| v.is_finite()) {
        if let Some(t) = Tangent::normalized(problem, du, 1.0) {
            return t;
        }
    }
    Tangent {
        du: vec![0.0; s.u.len()],
        dp: 1.0,
    }
}

/// Move a converged state from its `mu` to `target` at fixed lambda.
fn advance_mu(problem: &NonlinearProblem, state: &StateVector, target: f64, cfg: &ContinuationConfig) -> Result<StateVector> {
    let opts = cfg.newton();
    let mut current = state.clone();
    let start_mu = state.mu;
    let mut pieces = 1usize;
    let mut done = 0usize;
    while done < pieces {
        let mu = start_mu + (target - start_mu) * (done + 1) as f64 / pieces as f64;
        let mut trial = current.clone();
        trial.mu = mu;
        match problem.newton_correct(&trial, &Constraint::FixParameters, opts) {
            Ok(rec) if rec.node_count == crate::eigen::node_count(&current.u) && rec.l2 > 0.25 * problem.l2(&current.u) => {
                current = rec.state;
                done += 1;
            }
            _ if pieces < 1 << MAX_SUBDIVISIONS => {
                pieces *= 2;
                done *= 2;
            }
            _ => return arclength_in_mu(problem, &current, target, cfg),
        }
    }
    Ok(current)
}

/// Fallback: pseudo-arclength in `mu` at fixed lambda until `target` is crossed.
fn arclength_in_mu(problem: &NonlinearProblem, state: &StateVector, target: f64, cfg: &ContinuationConfig) -> Result<StateVector> {
    let rec = problem.record(state.clone(), 0);
    let mut tangent = parameter_tangent(problem, state, Parameter::Mu);
    if (target - state.mu) * tangent.dp < 0.0 {
        tangent = tangent.negated();
    }
    let tracer = Tracer {
        problem,
        cfg,
        anchors: &[],
        parameter: Parameter::Mu,
        stop_at: Some(target),
    };
    let (points, termination) = tracer.run(rec, tangent);
    if termination != Termination::TargetReached {
        return Err(Error::NotConverged {
            what: "mu continuation",
            residual: f64::NAN,
        });
    }
    let n = points.len();
    let (a, b) = (&points[n - 2].state, &points[n - 1].state);
    let s = ((target - a.mu) / (b.mu - a.mu)).clamp(0.0, 1.0);
    let guess = StateVector {
        u: a.u.iter().zip(&b.u).map(|(x, y)| x + s * (y - x)).collect(),
        lambda: state.lambda,
        mu: target,
    };
    Ok(problem.newton_correct(&guess, &Constraint::FixParameters, cfg.newton())?.state)
}

/// Continue the largest solution of `source` to `mu_target` in `steps`
/// equal increments and trace the branch through it in both directions.
/// Loss of convergence yields a partial branch annotated with the failure.
pub fn mu_homotopy(
    problem: &NonlinearProblem,
    source: &Branch,
    mu_target: f64,
    steps: usize,
    cfg: &ContinuationConfig,
    anchors: &[Anchor],
) -> Result<Branch> {
    cfg.validate()?;
    if steps == 0 {
        return Err(Error::Config("mu homotopy needs at least one step".into()));
    }
    let top = source
        .max_l2_index()
        .ok_or_else(|| Error::Precondition("source branch is empty".into()))?;
    let mut state = source.points[top].state.clone();
    let mu0 = state.mu;
    let mut path = vec![mu0];
    let id = format!("{}-to-mu{}", source.id, mu_target);
    for i in 1..=steps {
        let mu = mu0 + (mu_target - mu0) * i as f64 / steps as f64;
        match advance_mu(problem, &state, mu, cfg) {
            Ok(next) => {
                state = next;
                path.push(mu);
            }
            Err(e) => {
                return Ok(Branch {
                    id,
                    mu: state.mu,
                    origin: BranchOrigin::MuHomotopy {
                        source: source.id.clone(),
                        mu_path: path,
                    },
                    points: vec![problem.record(state, 0)],
                    termination: Termination::HomotopyFailed {
                        mu,
                        reason: e.to_string(),
                    },
                    backward_termination: None,
                    notes: vec![format!("homotopy stopped before mu = {mu}: {e}")],
                });
            }
        }
    }
    trace(
        problem,
        &state,
        anchors,
        cfg,
        BranchOrigin::MuHomotopy {
            source: source.id.clone(),
            mu_path: path,
        },
        id,
    )
}

/// Everything traced at one `mu`: anchors and both half-branches at each.
#[derive(Clone, Debug)]
pub struct DiagramRun {
    pub mu: f64,
    pub points: Vec<BifurcationPoint>,
    pub anchors: Vec<Anchor>,
    pub branches: Vec<Branch>,
}

impl DiagramRun {
    /// Groups of anchor indices joined by traced branches.
    pub fn components(&self) -> Vec<Vec<usize>> {
        components(self.anchors.len(), &self.branches)
    }
}

/// Detect bifurcation values for `modes` at `mu` on the problem grid and
/// trace both half-branches at each.
pub fn trace_all(
    problem: &NonlinearProblem,
    mu: f64,
    modes: &[usize],
    cfg: &ContinuationConfig,
    exec: Exec,
) -> Result<DiagramRun> {
    cfg.validate()?;
    let model = CurveModel::new(
        problem.m().clone(),
        crate::discretize::Scheme::FiniteDifference {
            n_interior: problem.dim(),
        },
    )?;
    let points = detect_bifurcation_values(&model, mu, modes, cfg.detection_range, cfg.detection_step, exec)?;
    let anchors = parallel::try_map(exec, &points, |p| Anchor::new(problem, &model, p))?;
    let jobs: Vec<(usize, i8)> = (0..anchors.len()).flat_map(|i| [(i, 1), (i, -1)]).collect();
    let branches = parallel::try_map(exec, &jobs, |&(i, side)| trace_from_bifurcation(problem, &anchors, i, side, cfg))?;
    Ok(DiagramRun {
        mu,
        points,
        anchors,
        branches,
    })
}

/// Union-find over anchors: two anchors share a component when some branch
/// starts at one and reconnects at the other.
pub fn components(anchor_count: usize, branches: &[Branch]) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..anchor_count).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for b in branches {
        let att = b.attachments();
        for w in att.windows(2) {
            if w[0] < anchor_count && w[1] < anchor_count {
                let (x, y) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
                if x != y {
                    parent[x.max(y)] = x.min(y);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in 0..anchor_count {
        let root = find(&mut parent, i);
        match groups.iter_mut().find(|g| g[0] == root) {
            Some(g) => g.push(i),
            None => groups.push(vec![i]),
        }
    }
    groups
}

/// Number of Newton iterations the reflected state `(-lambda, u(1 - .))`
/// needs at fixed parameters, or an error if it fails within `max_iter`.
pub fn reflection_iterations(problem: &NonlinearProblem, record: &SolutionRecord, tol: f64, max_iter: usize) -> Result<usize> {
    let rec = problem.newton_correct(&record.state.reflected(), &Constraint::FixParameters, NewtonOptions { tol, max_iter })?;
    Ok(rec.iterations)
}
