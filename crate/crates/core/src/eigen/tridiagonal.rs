//! Symmetric tridiagonal kernels: Sturm counts, bisection and a pivoted LU
//! solve for inverse iteration.

use crate::discretize::Tridiagonal;
use crate::{Error, Result};

/// Number of eigenvalues strictly below `x`.
pub fn sturm_count(t: &Tridiagonal, x: f64) -> usize {
    let n = t.dim();
    if n == 0 {
        return 0;
    }
    let scale = t.norm_inf().max(1.0);
    let pivmin = f64::MIN_POSITIVE.sqrt() * scale;
    let mut count = 0;
    let mut d = t.diag[0] - x;
    if d.abs() < pivmin {
        d = -pivmin;
    }
    if d < 0.0 {
        count += 1;
    }
    for i in 1..n {
        let e = t.off[i - 1];
        d = (t.diag[i] - x) - e * e / d;
        if d.abs() < pivmin {
            d = -pivmin;
        }
        if d < 0.0 {
            count += 1;
        }
    }
    count
}

/// The `n`-th smallest eigenvalue (1-based) by bisection on the Gershgorin
/// bracket. Stops at `tol` or when the bracket reaches rounding level.
pub fn bisect_nth(t: &Tridiagonal, n: usize, tol: f64) -> Result<f64> {
    let dim = t.dim();
    if n == 0 || n > dim {
        return Err(Error::IndexOutOfRange { index: n, dim });
    }
    let (mut lo, mut hi) = t.gershgorin();
    let pad = 1e-12 * (lo.abs() + hi.abs()).max(1.0);
    lo -= pad;
    hi += pad;
    bisect_bracket(t, n, lo, hi, tol)
}

/// Bisection for the `n`-th eigenvalue starting from a caller bracket with
/// `count(lo) < n <= count(hi)`.
pub fn bisect_bracket(t: &Tridiagonal, n: usize, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64> {
    debug_assert!(sturm_count(t, lo) < n && sturm_count(t, hi) >= n);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let floor = 2.0 * f64::EPSILON * lo.abs().max(hi.abs());
        if hi - lo <= tol.max(floor) || mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(t, mid) >= n {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Eigenvalues `1..=count` in ascending order.
pub fn lowest(t: &Tridiagonal, count: usize, tol: f64) -> Result<Vec<f64>> {
    (1..=count).map(|n| bisect_nth(t, n, tol)).collect()
}

/// LU factorization with partial pivoting of a (general) tridiagonal matrix,
/// stored as in LAPACK `gttrf`.
pub struct TridiagonalLu {
    dl: Vec<f64>,
    d: Vec<f64>,
    du: Vec<f64>,
    du2: Vec<f64>,
    ipiv: Vec<bool>,
}

impl TridiagonalLu {
    /// Factor `T - shift I`. Exactly zero pivots are replaced by a tiny
    /// multiple of the matrix norm, the usual device in inverse iteration.
    pub fn factor_shifted(t: &Tridiagonal, shift: f64) -> Self {
        let diag: Vec<f64> = t.diag.iter().map(|d| d - shift).collect();
        Self::factor(&t.off, &diag, &t.off, t.norm_inf().max(1.0) * f64::EPSILON)
    }

    /// Factor a general tridiagonal matrix with sub-diagonal `sub`,
    /// diagonal `diag` and super-diagonal `sup`.
    pub fn factor(sub: &[f64], diag: &[f64], sup: &[f64], tiny: f64) -> Self {
        let n = diag.len();
        let mut dl = sub.to_vec();
        let mut d = diag.to_vec();
        let mut du = sup.to_vec();
        let mut du2 = vec![0.0; n.saturating_sub(2)];
        let mut ipiv = vec![false; n];
        for i in 0..n.saturating_sub(1) {
            if d[i].abs() >= dl[i].abs() {
                if d[i] == 0.0 {
                    d[i] = tiny;
                }
                let f = dl[i] / d[i];
                dl[i] = f;
                d[i + 1] -= f * du[i];
            } else {
                let f = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = f;
                let tmp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = tmp - f * d[i + 1];
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] *= -f;
                }
                ipiv[i] = true;
            }
        }
        if n > 0 && d[n - 1] == 0.0 {
            d[n - 1] = tiny;
        }
        Self { dl, d, du, du2, ipiv }
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.d.len();
        for i in 0..n.saturating_sub(1) {
            if self.ipiv[i] {
                b.swap(i, i + 1);
                b[i + 1] -= self.dl[i] * b[i];
            } else {
                b[i + 1] -= self.dl[i] * b[i];
            }
        }
        if n == 0 {
            return;
        }
        b[n - 1] /= self.d[n - 1];
        if n > 1 {
            b[n - 2] = (b[n - 2] - self.du[n - 2] * b[n - 1]) / self.d[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - self.du[i] * b[i + 1] - self.du2[i] * b[i + 2]) / self.d[i];
        }
    }

    /// Smallest absolute pivot, a cheap singularity indicator.
    pub fn min_pivot(&self) -> f64 {
        self.d.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()))
    }
}
