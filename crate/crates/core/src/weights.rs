//! Coefficient functions on `[0, 1]`.
//!
//! A [`WeightFunction`] plays the role of either the spectral weight `m(x)`
//! or the nonlinear coefficient `a(x)`. Values are immutable after
//! construction, so a weight can be shared freely between worker threads.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Number of equispaced points (endpoints included) used by the symmetry and
/// sign probes.
pub const PROBE_POINTS: usize = 2001;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum WeightFunction {
    /// `sin(n pi x)`.
    Sine { n: u32 },
    /// Three-piece weight: negative bumps of height 0.2 on `(0, 0.2)` and
    /// `(0.8, 1)`, a positive unit bump on `(0.2, 0.8)`.
    #[serde(rename = "piecewise-sine")]
    PiecewiseSine,
    Constant { value: f64 },
    /// Values on an equispaced grid over `[0, 1]` (endpoints included),
    /// linearly interpolated.
    Tabulated { values: Vec<f64> },
}

impl WeightFunction {
    pub fn sine(n: u32) -> Self {
        WeightFunction::Sine { n }
    }

    pub fn constant(value: f64) -> Self {
        WeightFunction::Constant { value }
    }

    pub fn tabulated(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::Config("tabulated weight needs at least two values".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("tabulated weight values must be finite".into()));
        }
        Ok(WeightFunction::Tabulated { values })
    }

    /// Checked evaluation: `x` must lie in `[0, 1]`.
    pub fn evaluate(&self, x: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::Domain(format!("x = {x} lies outside [0, 1]")));
        }
        Ok(self.at(x))
    }

    /// Unchecked evaluation used on trusted grids.
    #[inline]
    pub fn at(&self, x: f64) -> f64 {
        match self {
            WeightFunction::Sine { n } => (*n as f64 * PI * x).sin(),
            WeightFunction::PiecewiseSine => piecewise_sine(x),
            WeightFunction::Constant { value } => *value,
            WeightFunction::Tabulated { values } => interpolate(values, x),
        }
    }

    /// Sample at every point of `xs`.
    pub fn sample(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.at(x)).collect()
    }

    /// True iff `max |w(1-x) + w(x)| <= tol` on the probe grid.
    pub fn is_odd_about_half(&self, tol: f64) -> bool {
        probe_grid().all(|x| (self.at(1.0 - x) + self.at(x)).abs() <= tol)
    }

    /// Interior probe points `(x_minus, x_plus)` with `w(x_minus) < 0 < w(x_plus)`,
    /// if both signs occur.
    ///
    /// The witnesses are the (first) interior argmin and argmax on the probe grid.
    pub fn sign_change_witnesses(&self) -> Option<(f64, f64)> {
        let (xmin, vmin) = self.interior_extreme(|v, best| v < best - 1e-12)?;
        let (xmax, vmax) = self.interior_extreme(|v, best| v > best + 1e-12)?;
        (vmin < 0.0 && vmax > 0.0).then_some((xmin, xmax))
    }

    /// An interior point where `w > 0`: the probe argmax, ties resolved
    /// towards the centre of the interval.
    pub fn positivity_witness(&self) -> Option<f64> {
        let mut best: Option<(f64, f64)> = None;
        for x in probe_grid().filter(|&x| x > 0.0 && x < 1.0) {
            let v = self.at(x);
            let better = match best {
                None => true,
                Some((bx, bv)) => {
                    v > bv + 1e-12 || ((v - bv).abs() <= 1e-12 && (x - 0.5).abs() < (bx - 0.5).abs())
                }
            };
            if better {
                best = Some((x, v));
            }
        }
        best.filter(|&(_, v)| v > 0.0).map(|(x, _)| x)
    }

    fn interior_extreme(&self, better: impl Fn(f64, f64) -> bool) -> Option<(f64, f64)> {
        let mut best: Option<(f64, f64)> = None;
        for x in probe_grid().filter(|&x| x > 0.0 && x < 1.0) {
            let v = self.at(x);
            match best {
                Some((_, bv)) if !better(v, bv) => {}
                _ => best = Some((x, v)),
            }
        }
        best
    }
}

/// The equispaced probe abscissae `i / (PROBE_POINTS - 1)`.
pub fn probe_grid() -> impl Iterator<Item = f64> {
    let last = (PROBE_POINTS - 1) as f64;
    (0..PROBE_POINTS).map(move |i| i as f64 / last)
}

fn piecewise_sine(x: f64) -> f64 {
    if x <= 0.2 {
        -0.2 * (PI / 0.2 * (0.2 - x)).sin()
    } else if x <= 0.8 {
        (PI / 0.6 * (x - 0.2)).sin()
    } else {
        -0.2 * (PI / 0.2 * (x - 0.8)).sin()
    }
}

fn interpolate(values: &[f64], x: f64) -> f64 {
    let cells = values.len() - 1;
    let t = (x.clamp(0.0, 1.0) * cells as f64).min(cells as f64);
    let i = (t.floor() as usize).min(cells - 1);
    let frac = t - i as f64;
    values[i] * (1.0 - frac) + values[i + 1] * frac
}

impl fmt::Display for WeightFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightFunction::Sine { n } => write!(f, "sine:{n}"),
            WeightFunction::PiecewiseSine => write!(f, "piecewise-sine"),
            WeightFunction::Constant { value } => write!(f, "constant:{value}"),
            WeightFunction::Tabulated { values } => write!(f, "tabulated[{}]", values.len()),
        }
    }
}

/// Flag syntax: `sine:2`, `piecewise-sine`, `constant:1.0`, `tabulated:0,1,0`.
impl FromStr for WeightFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k.trim(), Some(a.trim())),
            None => (s, None),
        };
        let need = |what: &str| arg.ok_or_else(|| Error::Parse(format!("weight `{s}` needs {what}")));
        match kind {
            "sine" | "sin" => {
                let n: u32 = need("a frequency, e.g. sine:2")?
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad sine frequency in `{s}`")))?;
                if n == 0 {
                    return Err(Error::Parse("sine frequency must be positive".into()));
                }
                Ok(WeightFunction::Sine { n })
            }
            "piecewise-sine" => Ok(WeightFunction::PiecewiseSine),
            "constant" | "const" => {
                let value: f64 = need("a value, e.g. constant:1.0")?
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad constant in `{s}`")))?;
                Ok(WeightFunction::Constant { value })
            }
            "tabulated" => {
                let values = need("comma separated values")?
                    .split(',')
                    .map(|v| v.trim().parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| Error::Parse(format!("bad tabulated values in `{s}`")))?;
                WeightFunction::tabulated(values)
            }
            _ => Err(Error::Parse(format!("unknown weight `{s}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn piecewise_values() {
        let a = WeightFunction::PiecewiseSine;
        assert!((a.evaluate(0.5).unwrap() - 1.0).abs() < 1e-15);
        assert!((a.evaluate(0.1).unwrap() + 0.2).abs() < 1e-15);
        for x in [0.0, 0.2, 0.8, 1.0] {
            assert!(a.evaluate(x).unwrap().abs() < 1e-12, "a({x}) != 0");
        }
        for b in [0.2, 0.8] {
            let left = a.at(b - 1e-13);
            let right = a.at(b + 1e-13);
            assert!((left - right).abs() < 1e-11);
        }
    }

    #[test]
    fn piecewise_signs_on_probe_grid() {
        let a = WeightFunction::PiecewiseSine;
        for x in probe_grid() {
            let v = a.at(x);
            if x > 0.0 && x < 0.2 - 1e-9 || x > 0.8 + 1e-9 && x < 1.0 {
                assert!(v < 0.0, "a({x}) = {v}");
            } else if x > 0.2 + 1e-9 && x < 0.8 - 1e-9 {
                assert!(v > 0.0, "a({x}) = {v}");
            }
        }
    }

    #[test]
    fn sine_values() {
        let m = WeightFunction::sine(2);
        assert!((m.evaluate(0.25).unwrap() - 1.0).abs() < 1e-15);
        assert!((m.evaluate(0.75).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn out_of_domain() {
        let m = WeightFunction::sine(2);
        assert!(matches!(m.evaluate(-0.01), Err(Error::Domain(_))));
        assert!(matches!(m.evaluate(1.5), Err(Error::Domain(_))));
    }

    #[test]
    fn oddness() {
        assert!(WeightFunction::sine(2).is_odd_about_half(1e-12));
        assert!(!WeightFunction::sine(3).is_odd_about_half(1e-12));
        assert!(WeightFunction::constant(0.0).is_odd_about_half(1e-12));
        assert!(!WeightFunction::PiecewiseSine.is_odd_about_half(1e-12));
        for k in 1..=3 {
            let m = WeightFunction::sine(2 * k);
            for x in probe_grid() {
                assert!((m.at(x) + m.at(1.0 - x)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn witnesses() {
        let (xm, xp) = WeightFunction::sine(2).sign_change_witnesses().unwrap();
        assert!((xm - 0.75).abs() < 1e-12 && (xp - 0.25).abs() < 1e-12);
        assert!(WeightFunction::constant(1.0).sign_change_witnesses().is_none());
        let (xm, xp) = WeightFunction::PiecewiseSine.sign_change_witnesses().unwrap();
        assert!((xm - 0.1).abs() < 1e-12, "{xm}");
        assert!((xp - 0.5).abs() < 1e-12, "{xp}");
        assert_eq!(WeightFunction::constant(1.0).positivity_witness(), Some(0.5));
        assert_eq!(WeightFunction::constant(-1.0).positivity_witness(), None);
    }

    #[test]
    fn tabulated_interpolates_linearly() {
        let w = WeightFunction::tabulated(vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(w.at(0.25), 0.5);
        assert_eq!(w.at(0.5), 1.0);
        assert_eq!(w.at(1.0), 0.0);
        assert!(WeightFunction::tabulated(vec![1.0]).is_err());
    }

    #[test]
    fn parse_and_config_syntax() {
        assert_eq!("sine:2".parse::<WeightFunction>().unwrap(), WeightFunction::sine(2));
        assert_eq!("piecewise-sine".parse::<WeightFunction>().unwrap(), WeightFunction::PiecewiseSine);
        assert_eq!(
            "constant:1.5".parse::<WeightFunction>().unwrap(),
            WeightFunction::constant(1.5)
        );
        assert!("sine".parse::<WeightFunction>().is_err());
        assert!("cosine:2".parse::<WeightFunction>().is_err());

        #[derive(Deserialize)]
        struct Doc {
            m: WeightFunction,
            a: WeightFunction,
            c: WeightFunction,
        }
        let doc: Doc = toml::from_str(
            r#"
            m = { type = "sine", n = 2 }
            a = { type = "piecewise-sine" }
            c = { type = "constant", value = 1.0 }
            "#,
        )
        .unwrap();
        assert_eq!(doc.m, WeightFunction::sine(2));
        assert_eq!(doc.a, WeightFunction::PiecewiseSine);
        assert_eq!(doc.c, WeightFunction::constant(1.0));
    }
}
