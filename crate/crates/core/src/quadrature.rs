//! Composite quadrature rules.

use std::f64::consts::PI;

/// Composite trapezoid rule on `panels` equal panels of `[lo, hi]`.
pub fn trapezoid(f: impl Fn(f64) -> f64, lo: f64, hi: f64, panels: usize) -> f64 {
    let panels = panels.max(1);
    let h = (hi - lo) / panels as f64;
    let interior: f64 = (1..panels).map(|i| f(lo + i as f64 * h)).sum();
    h * (0.5 * (f(lo) + f(hi)) + interior)
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
#[derive(Clone, Debug)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "Gauss-Legendre order must be positive");
        let mut nodes = vec![0.0; order];
        let mut weights = vec![0.0; order];
        let n = order as f64;
        for i in 0..order.div_ceil(2) {
            // Chebyshev-like initial guess, then Newton on P_n.
            let mut z = (PI * (i as f64 + 0.75) / (n + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(order, z);
                dp = d;
                let dz = p / d;
                z -= dz;
                if dz.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(order, z);
            dp = if d.is_finite() { d } else { dp };
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            nodes[i] = -z;
            nodes[order - 1 - i] = z;
            weights[i] = w;
            weights[order - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// Composite rule: `panels` equal panels of `[lo, hi]`, this rule on each.
    pub fn integrate(&self, f: impl Fn(f64) -> f64, lo: f64, hi: f64, panels: usize) -> f64 {
        let panels = panels.max(1);
        let width = (hi - lo) / panels as f64;
        let half = 0.5 * width;
        let mut total = 0.0;
        for p in 0..panels {
            let mid = lo + (p as f64 + 0.5) * width;
            let s: f64 = self
                .nodes
                .iter()
                .zip(&self.weights)
                .map(|(&t, &w)| w * f(mid + half * t))
                .sum();
            total += half * s;
        }
        total
    }

    /// All abscissae and weights of the composite rule, in increasing order.
    pub fn composite_points(&self, lo: f64, hi: f64, panels: usize) -> Vec<(f64, f64)> {
        let panels = panels.max(1);
        let width = (hi - lo) / panels as f64;
        let half = 0.5 * width;
        let mut out = Vec::with_capacity(panels * self.nodes.len());
        for p in 0..panels {
            let mid = lo + (p as f64 + 0.5) * width;
            for (&t, &w) in self.nodes.iter().zip(&self.weights) {
                out.push((mid + half * t, half * w));
            }
        }
        out
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let dp = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, dp)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        let gl = GaussLegendre::new(8);
        // degree 15 is integrated exactly by 8 nodes
        let v = gl.integrate(|x| x.powi(14) + 3.0 * x.powi(3), -1.0, 1.0, 1);
        assert!((v - 2.0 / 15.0).abs() < 1e-14, "{v}");
        let w: f64 = gl.weights.iter().sum();
        assert!((w - 2.0).abs() < 1e-14);
    }

    #[test]
    fn trapezoid_second_order() {
        let e1 = (trapezoid(|x| x.exp(), 0.0, 1.0, 50) - (1f64.exp() - 1.0)).abs();
        let e2 = (trapezoid(|x| x.exp(), 0.0, 1.0, 100) - (1f64.exp() - 1.0)).abs();
        let order = (e1 / e2).log2();
        assert!((order - 2.0).abs() < 0.01, "{order}");
    }

    #[test]
    fn composite_trig_integral() {
        let gl = GaussLegendre::new(8);
        let v = gl.integrate(|x| (7.0 * PI * x).sin().powi(2), 0.0, 1.0, 16);
        assert!((v - 0.5).abs() < 1e-14);
    }
}
