//! Dense Cholesky machinery shared by the exact and heteroscedastic GPs.

use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::{Mat, MatRef, Side};

use crate::error::{Error, Result};

/// Relative jitter added before the first factorization attempt.
pub const JITTER_START: f64 = 1e-8;
/// Largest relative jitter tried before giving up.
pub const JITTER_MAX: f64 = 1e-2;

/// Lower Cholesky factor of `A + jitter·I`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    llt: faer::linalg::solvers::Llt<f64>,
    jitter: f64,
}

impl Cholesky {
    /// Factor `a` following the jitter policy: add `1e-8·mean(diag)`, then
    /// escalate by ×10 up to `1e-2·mean(diag)` before reporting failure.
    pub fn with_jitter(a: &Mat<f64>) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || n != a.ncols() {
            return Err(Error::invalid(format!("cannot factor a {}x{} matrix", n, a.ncols())));
        }
        let mean_diag = (0..n).map(|i| a[(i, i)]).sum::<f64>() / n as f64;
        if !mean_diag.is_finite() {
            return Err(Error::Numerical { message: "non-finite covariance diagonal".into(), jitter: 0.0 });
        }
        let scale = if mean_diag > 0.0 { mean_diag } else { 1.0 };
        let mut rel = JITTER_START;
        let mut work = a.clone();
        loop {
            let jitter = rel * scale;
            for i in 0..n {
                work[(i, i)] = a[(i, i)] + jitter;
            }
            if let Ok(llt) = work.llt(Side::Lower) {
                let l = llt.L();
                if (0..n).all(|i| l[(i, i)].is_finite() && l[(i, i)] > 0.0) {
                    return Ok(Self { llt, jitter });
                }
            }
            if rel >= JITTER_MAX * (1.0 - 1e-12) {
                return Err(Error::Numerical {
                    message: format!("Cholesky factorization failed for {n}x{n} covariance"),
                    jitter,
                });
            }
            rel *= 10.0;
        }
    }

    pub fn dim(&self) -> usize {
        self.llt.L().nrows()
    }

    pub fn l(&self) -> MatRef<'_, f64> {
        self.llt.L()
    }

    /// Absolute jitter that was added to the diagonal.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Σ log L_ii, i.e. half the log-determinant.
    pub fn half_log_det(&self) -> f64 {
        let l = self.l();
        (0..l.nrows()).map(|i| l[(i, i)].ln()).sum()
    }

    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        let rhs = Mat::from_fn(b.len(), 1, |i, _| b[i]);
        let x = self.llt.solve(&rhs);
        (0..b.len()).map(|i| x[(i, 0)]).collect()
    }

    pub fn solve(&self, b: &Mat<f64>) -> Mat<f64> {
        self.llt.solve(b)
    }

    /// `L⁻¹ B`.
    pub fn solve_lower(&self, b: &Mat<f64>) -> Mat<f64> {
        let mut out = b.clone();
        self.l().solve_lower_triangular_in_place(&mut out);
        out
    }

    pub fn inverse(&self) -> Mat<f64> {
        self.llt.inverse()
    }

    /// `L·Lᵀ`, the jittered matrix that was factored.
    pub fn reconstruct(&self) -> Mat<f64> {
        self.llt.reconstruct()
    }
}

pub fn mat_vec(a: &Mat<f64>, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.nrows()];
    for j in 0..a.ncols() {
        let xj = x[j];
        if xj == 0.0 {
            continue;
        }
        let col = a.col(j);
        for (i, o) in out.iter_mut().enumerate() {
            *o += col[i] * xj;
        }
    }
    out
}

/// `Aᵀ x`.
pub fn mat_t_vec(a: &Mat<f64>, x: &[f64]) -> Vec<f64> {
    (0..a.ncols())
        .map(|j| {
            let col = a.col(j);
            (0..a.nrows()).map(|i| col[i] * x[i]).sum()
        })
        .collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Σ_ij A_ij B_ij.
pub fn frobenius_inner(a: &Mat<f64>, b: &Mat<f64>) -> f64 {
    let mut s = 0.0;
    for j in 0..a.ncols() {
        let ca = a.col(j);
        let cb = b.col(j);
        for i in 0..a.nrows() {
            s += ca[i] * cb[i];
        }
    }
    s
}

pub fn frobenius_norm(a: &Mat<f64>) -> f64 {
    frobenius_inner(a, a).sqrt()
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues(a: &Mat<f64>) -> Result<Vec<f64>> {
    let mut ev = a
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Numerical { message: format!("eigen decomposition failed: {e:?}"), jitter: 0.0 })?;
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd(n: usize) -> Mat<f64> {
        Mat::from_fn(n, n, |i, j| {
            let d = i as f64 - j as f64;
            (-0.5 * d * d / 4.0).exp() + if i == j { 0.1 } else { 0.0 }
        })
    }

    #[test]
    fn reconstructs_and_solves() {
        let a = spd(12);
        let c = Cholesky::with_jitter(&a).unwrap();
        let r = c.reconstruct();
        let mut diff = r.clone();
        for j in 0..12 {
            for i in 0..12 {
                diff[(i, j)] -= a[(i, j)] + if i == j { c.jitter() } else { 0.0 };
            }
        }
        assert!(frobenius_norm(&diff) / frobenius_norm(&a) < 1e-12);
        let b: Vec<f64> = (0..12).map(|i| (i as f64).sin()).collect();
        let x = c.solve_vec(&b);
        let ax = mat_vec(&r, &x);
        for (u, v) in ax.iter().zip(&b) {
            assert!((u - v).abs() < 1e-10);
        }
    }

    #[test]
    fn escalates_jitter_for_rank_deficient_input() {
        // rank one: ones matrix
        let a = Mat::from_fn(6, 6, |_, _| 1.0);
        let c = Cholesky::with_jitter(&a).unwrap();
        assert!(c.jitter() >= 1e-8);
    }

    #[test]
    fn negative_definite_fails_with_jitter_report() {
        let a = Mat::from_fn(3, 3, |i, j| if i == j { -1.0 } else { 0.0 });
        match Cholesky::with_jitter(&a) {
            Err(Error::Numerical { jitter, .. }) => assert!(jitter > 0.0),
            other => panic!("expected numerical error, got {other:?}"),
        }
    }
}
