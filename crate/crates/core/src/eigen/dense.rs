//! Dense symmetric kernels for the spectral scheme: Householder reduction to
//! tridiagonal form and LU with partial pivoting.

use crate::discretize::{DenseSymmetric, Tridiagonal};

/// Orthogonally similar tridiagonal matrix (eigenvalues only; the
/// transformation is not accumulated).
pub fn householder_tridiagonal(a: &DenseSymmetric) -> Tridiagonal {
    let n = a.dim();
    let mut m: Vec<Vec<f64>> = a.rows().map(|r| r.to_vec()).collect();
    let mut off = vec![0.0; n.saturating_sub(1)];
    for k in 0..n.saturating_sub(2) {
        let alpha_sq: f64 = (k + 1..n).map(|i| m[i][k] * m[i][k]).sum();
        let norm = alpha_sq.sqrt();
        if norm == 0.0 {
            off[k] = 0.0;
            continue;
        }
        let alpha = if m[k + 1][k] > 0.0 { -norm } else { norm };
        off[k] = alpha;
        // v = x - alpha e1, restricted to rows k+1..n
        let mut v: Vec<f64> = (k + 1..n).map(|i| m[i][k]).collect();
        v[0] -= alpha;
        let vnorm_sq: f64 = v.iter().map(|x| x * x).sum();
        if vnorm_sq == 0.0 {
            continue;
        }
        let beta = 2.0 / vnorm_sq;
        let len = v.len();
        // p = beta * A22 v
        let mut p = vec![0.0; len];
        for (i, pi) in p.iter_mut().enumerate() {
            let row = &m[k + 1 + i];
            *pi = beta * (0..len).map(|j| row[k + 1 + j] * v[j]).sum::<f64>();
        }
        let kdot = 0.5 * beta * p.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>();
        let w: Vec<f64> = p.iter().zip(&v).map(|(pi, vi)| pi - kdot * vi).collect();
        for i in 0..len {
            for j in 0..len {
                m[k + 1 + i][k + 1 + j] -= v[i] * w[j] + w[i] * v[j];
            }
        }
    }
    if n >= 2 {
        off[n - 2] = m[n - 1][n - 2];
    }
    let diag = (0..n).map(|i| m[i][i]).collect();
    Tridiagonal::new(diag, off)
}

/// LU with partial pivoting of a dense square matrix.
pub struct DenseLu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl DenseLu {
    /// Factor `A - shift I`; zero pivots are nudged to `eps * ||A||`.
    pub fn factor_shifted(a: &DenseSymmetric, shift: f64) -> Self {
        let n = a.dim();
        let mut lu: Vec<f64> = a.rows().flat_map(|r| r.iter().copied()).collect();
        for i in 0..n {
            lu[i * n + i] -= shift;
        }
        let tiny = f64::EPSILON * a.norm_inf().max(1.0);
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let p = (k..n)
                .max_by(|&i, &j| lu[i * n + k].abs().total_cmp(&lu[j * n + k].abs()))
                .unwrap_or(k);
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            if lu[k * n + k] == 0.0 {
                lu[k * n + k] = tiny;
            }
            let pivot = lu[k * n + k];
            for i in k + 1..n {
                let f = lu[i * n + k] / pivot;
                lu[i * n + k] = f;
                if f != 0.0 {
                    for j in k + 1..n {
                        lu[i * n + j] -= f * lu[k * n + j];
                    }
                }
            }
        }
        Self { n, lu, perm }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let s: f64 = (0..i).map(|j| self.lu[i * n + j] * x[j]).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| self.lu[i * n + j] * x[j]).sum();
            x[i] = (x[i] - s) / self.lu[i * n + i];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::tridiagonal::bisect_nth;

    fn sample_matrix(n: usize) -> DenseSymmetric {
        let mut a = DenseSymmetric::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                let v = ((i * 7 + j * 3) % 11) as f64 - 5.0 + if i == j { 3.0 * i as f64 } else { 0.0 };
                a.set(i, j, v);
            }
        }
        a
    }

    #[test]
    fn reduction_preserves_trace_and_frobenius_norm() {
        let a = sample_matrix(9);
        let t = householder_tridiagonal(&a);
        let tr_a: f64 = (0..9).map(|i| a.get(i, i)).sum();
        let tr_t: f64 = t.diag.iter().sum();
        assert!((tr_a - tr_t).abs() < 1e-10);
        let fa: f64 = a.rows().flatten().map(|v| v * v).sum();
        let ft: f64 = t.diag.iter().map(|v| v * v).sum::<f64>() + 2.0 * t.off.iter().map(|v| v * v).sum::<f64>();
        assert!((fa - ft).abs() < 1e-9 * fa);
    }

    #[test]
    fn eigenvalues_satisfy_characteristic_equation() {
        let a = sample_matrix(6);
        let t = householder_tridiagonal(&a);
        for n in 1..=6 {
            let ev = bisect_nth(&t, n, 1e-12).unwrap();
            // A - ev I must be numerically singular: inverse iteration blows up.
            let lu = DenseLu::factor_shifted(&a, ev);
            let x = lu.solve(&[1.0, 0.3, -0.2, 0.7, 0.1, -0.5]);
            let growth: f64 = x.iter().map(|v| v.abs()).fold(0.0, f64::max);
            assert!(growth > 1e8, "n={n} growth {growth}");
        }
    }

    #[test]
    fn lu_solves() {
        let a = sample_matrix(7);
        let x: Vec<f64> = (0..7).map(|i| i as f64 - 2.5).collect();
        let b = a.mul_vec(&x);
        let got = DenseLu::factor_shifted(&a, 0.0).solve(&b);
        for (g, e) in got.iter().zip(&x) {
            assert!((g - e).abs() < 1e-10);
        }
    }
}
