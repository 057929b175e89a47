//! Nodal eigencurves of weighted Sturm-Liouville problems and bifurcation
//! branches of nodal solutions of
//!
//! ```text
//! -u'' - mu u = lambda m(x) u - a(x) u^2   in (0, 1),   u(0) = u(1) = 0.
//! ```
//!
//! The crate is organized bottom-up:
//!
//! * [`weights`]: the coefficient functions `m` and `a`.
//! * [`discretize`]: centered finite differences and a sine-Galerkin basis.
//! * [`eigen`]: n-th eigenvalue / eigenfunction of a discrete operator.
//! * [`eigencurve`]: the maps `lambda -> Sigma_n(lambda)`, level sets and maxima.
//! * [`perturbation`]: closed-form and quadrature oracles for `Sigma_n''(0)`.
//! * [`nonlinear`]: residual, Jacobian and Newton corrector of the nonlinear problem.
//! * [`continuation`]: pseudo-arclength branch tracing and mu-homotopies.
//! * [`diagram`]: bifurcation diagrams, CSV and SVG export.
//! * [`runner`]: declarative run configuration behind the `nodal` binary.

// `!(x > 0.0)` guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod continuation;
pub mod diagram;
pub mod discretize;
pub mod eigen;
pub mod eigencurve;
mod error;
pub mod nonlinear;
pub mod parallel;
pub mod perturbation;
#[cfg(test)]
mod properties;
pub mod quadrature;
pub mod runner;
pub mod weights;

pub use error::{Error, Result};
