//! Second-order perturbation of `Sigma_n` at `lambda = 0` for the weights
//! `m(x) = sin(2 k pi x)`.
//!
//! At `lambda = 0` the eigenfunction is `sin(n pi x)` (normalized to
//! `int phi^2 = 1/2`). Its lambda-derivative solves
//! `[-D^2 - (n pi)^2] u = m sin(n pi x)` and is `B sin(n pi x) + p(x)` with `p`
//! the variation-of-constants particular solution vanishing at `x = 0`.
//! `Sigma_n''(0)` follows from three independent routes.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::discretize::Grid;
use crate::eigencurve::{CurveModel, STENCIL_STEP};
use crate::quadrature::GaussLegendre;
use crate::weights::WeightFunction;
use crate::{Error, Result};

const GL_ORDER: usize = 12;
const GL_PANELS: usize = 32;

fn check_modes(n: usize, k: usize) -> Result<()> {
    if n == 0 || k == 0 {
        return Err(Error::Domain(format!("mode n = {n} and frequency k = {k} must be positive")));
    }
    Ok(())
}

fn check_nonresonant(n: usize, k: usize) -> Result<()> {
    check_modes(n, k)?;
    if n == k {
        return Err(Error::Domain(format!("resonant case n = k = {n}: p has no closed form")));
    }
    Ok(())
}

/// `p(x) = (1/(n pi)) int_0^x sin(2 k pi s) sin(n pi s) sin(n pi (s - x)) ds`
/// by composite Gauss-Legendre quadrature.
pub fn p_quadrature(n: usize, k: usize, x: f64) -> Result<f64> {
    check_modes(n, k)?;
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("x = {x} outside [0, 1]")));
    }
    Ok(p_quadrature_with(&GaussLegendre::new(GL_ORDER), n, k, x))
}

fn p_quadrature_with(gl: &GaussLegendre, n: usize, k: usize, x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let (w, nf) = (2.0 * k as f64 * PI, n as f64 * PI);
    let integral = gl.integrate(|s| (w * s).sin() * (nf * s).sin() * (nf * (s - x)).sin(), 0.0, x, GL_PANELS);
    integral / nf
}

/// Closed form of [`p_quadrature`], valid for `n != k`:
/// `-(1/8pi^2) [cos((2k-n) pi x)/(k(n-k)) + cos((2k+n) pi x)/(k(n+k)) - 2n cos(n pi x)/(k(n^2-k^2))]`.
/// The last coefficient makes `p(0) = 0`.
pub fn p_closed_form(n: usize, k: usize, x: f64) -> Result<f64> {
    check_nonresonant(n, k)?;
    Ok(closed_form_terms(n, k, x, 2.0))
}

/// The same expression with coefficient `n` instead of `2n` on the
/// `cos(n pi x)` term. It differs from [`p_closed_form`] by a multiple of
/// `cos(n pi x)`, a homogeneous solution, so it still solves the
/// differential equation but does not vanish at the end points.
pub fn p_closed_form_unpinned(n: usize, k: usize, x: f64) -> Result<f64> {
    check_nonresonant(n, k)?;
    Ok(closed_form_terms(n, k, x, 1.0))
}

fn closed_form_terms(n: usize, k: usize, x: f64, pin: f64) -> f64 {
    let (n, k) = (n as f64, k as f64);
    let t1 = ((2.0 * k - n) * PI * x).cos() / (k * (n - k));
    let t2 = ((2.0 * k + n) * PI * x).cos() / (k * (n + k));
    let t3 = pin * n * (n * PI * x).cos() / (k * (n * n - k * k));
    -(t1 + t2 - t3) / (8.0 * PI * PI)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationProfile {
    pub n: usize,
    pub k: usize,
    /// Abscissae including both end points.
    pub x: Vec<f64>,
    pub p: Vec<f64>,
    /// `B = -2 int_0^1 sin(n pi s) p(s) ds`.
    pub b: f64,
    pub phi_dot: Vec<f64>,
}

/// `phi_dot = B sin(n pi x) + p(x)` on `grid` plus its two end points.
pub fn phi_dot(n: usize, k: usize, grid: &Grid) -> Result<PerturbationProfile> {
    check_nonresonant(n, k)?;
    let gl = GaussLegendre::new(GL_ORDER);
    let nf = n as f64 * PI;
    let b = -2.0 * gl.integrate(|s| (nf * s).sin() * closed_form_terms(n, k, s, 2.0), 0.0, 1.0, GL_PANELS);
    let x = grid.nodes_with_boundary();
    let p: Vec<f64> = x.iter().map(|&x| closed_form_terms(n, k, x, 2.0)).collect();
    let phi_dot = x.iter().zip(&p).map(|(x, p)| b * (nf * x).sin() + p).collect();
    Ok(PerturbationProfile { n, k, x, p, b, phi_dot })
}

/// Discrete L2 norm of `[-D_h^2 - (n pi)^2] phi_dot - m sin(n pi x)` over
/// the interior nodes; `O(h^2)` for a genuine solution.
pub fn phi_dot_residual(profile: &PerturbationProfile) -> f64 {
    let x = &profile.x;
    let u = &profile.phi_dot;
    let h = x[1] - x[0];
    let nf = profile.n as f64 * PI;
    let w = 2.0 * profile.k as f64 * PI;
    let sum: f64 = (1..x.len() - 1)
        .map(|i| {
            let lap = (-u[i - 1] + 2.0 * u[i] - u[i + 1]) / (h * h);
            let r = lap - nf * nf * u[i] - (w * x[i]).sin() * (nf * x[i]).sin();
            r * r
        })
        .sum();
    (h * sum).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Route {
    /// `1 / (4 pi^2 (n^2 - k^2))`.
    ClosedForm,
    /// `-4 int_0^1 m phi_dot phi` with `phi = sin(n pi x)`.
    Quadrature,
    /// Five-point second difference of the tabulated eigencurve.
    CurveFd,
}

impl Route {
    pub const ALL: [Route; 3] = [Route::ClosedForm, Route::Quadrature, Route::CurveFd];

    pub fn name(self) -> &'static str {
        match self {
            Route::ClosedForm => "closed_form",
            Route::Quadrature => "quadrature",
            Route::CurveFd => "curve_fd",
        }
    }
}

/// The published expression `1 / (4 pi^2 (n^2 - k^2))` without any
/// validity checks.
pub fn theorem_value(n: usize, k: usize) -> f64 {
    let (n, k) = (n as f64, k as f64);
    1.0 / (4.0 * PI * PI * (n * n - k * k))
}

/// Agreement required between the two quadrature reductions.
const REDUCTION_TOL: f64 = 1e-9;

pub fn sigma_ddot_zero(n: usize, k: usize, route: Route) -> Result<f64> {
    check_modes(n, k)?;
    match route {
        Route::ClosedForm => {
            if n <= k || n == 2 * k {
                return Err(Error::Domain(format!(
                    "closed form is only claimed for n > k, n != 2k (got n = {n}, k = {k})"
                )));
            }
            Ok(theorem_value(n, k))
        }
        Route::Quadrature => {
            check_nonresonant(n, k)?;
            let gl = GaussLegendre::new(GL_ORDER);
            let nf = n as f64 * PI;
            let w = 2.0 * k as f64 * PI;
            let p = |s: f64| p_quadrature_with(&gl, n, k, s);
            let b = -2.0 * gl.integrate(|s| (nf * s).sin() * p(s), 0.0, 1.0, GL_PANELS);
            let full = -4.0 * gl.integrate(|s| (w * s).sin() * (b * (nf * s).sin() + p(s)) * (nf * s).sin(), 0.0, 1.0, GL_PANELS);
            let reduced = -4.0 * gl.integrate(|s| (w * s).sin() * p(s) * (nf * s).sin(), 0.0, 1.0, GL_PANELS);
            if (full - reduced).abs() > REDUCTION_TOL {
                return Err(Error::Consistency(format!(
                    "quadrature reductions disagree: {full} vs {reduced}"
                )));
            }
            Ok(full)
        }
        Route::CurveFd => {
            let model = CurveModel::new(
                WeightFunction::sine(2 * k as u32),
                crate::discretize::Scheme::spectral_default(),
            )?
            .with_tolerance(1e-13);
            model.second_derivative(n, 0.0, STENCIL_STEP)
        }
    }
}
