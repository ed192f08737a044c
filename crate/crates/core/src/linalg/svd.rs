use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Left/right singular vectors and singular values kept by [`truncated_svd`].
#[derive(Debug, Clone)]
pub struct TruncatedSvdResult {
    /// Left singular vectors, one per retained mode.
    pub u: DMatrix<f64>,
    /// Retained singular values, nonincreasing and strictly positive.
    pub sigma: DVector<f64>,
    /// Right singular vectors, one per retained mode.
    pub v: DMatrix<f64>,
    pub retained_rank: usize,
    /// Every singular value of the input, retained or not.
    pub spectrum: Vec<f64>,
}

impl TruncatedSvdResult {
    fn empty(rows: usize, cols: usize, spectrum: Vec<f64>) -> Self {
        Self {
            u: DMatrix::zeros(rows, 0),
            sigma: DVector::zeros(0),
            v: DMatrix::zeros(cols, 0),
            retained_rank: 0,
            spectrum,
        }
    }

    /// `U diag(sigma) V^T`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut us = self.u.clone();
        for (j, s) in self.sigma.iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        us * self.v.transpose()
    }
}

pub(crate) fn ensure_finite(a: &DMatrix<f64>, what: &str) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{what} has non-finite entries")))
    }
}

/// Number of modes kept for the spectrum `sigma` (sorted, nonincreasing)
/// under relative Frobenius tolerance `eps`.
///
/// The tail energy `sqrt(sum_{i>=k} sigma_i^2)` must not exceed
/// `eps * ||A||_F`. Singular values under the floor
/// `max(rows, cols) * EPSILON * sigma_0` are never kept.
pub fn truncation_rank(sigma: &[f64], eps: f64, rows: usize, cols: usize) -> usize {
    let Some(&s0) = sigma.first() else { return 0 };
    if s0 <= 0.0 {
        return 0;
    }
    let floor = rows.max(cols) as f64 * f64::EPSILON * s0;
    let numerical = sigma.iter().take_while(|&&s| s > floor).count();
    if eps == 0.0 {
        return numerical;
    }
    let total: f64 = sigma.iter().map(|s| s * s).sum();
    let budget = eps * eps * total;
    // tail[k] = sum_{i >= k} sigma_i^2, accumulated from the small end.
    let mut tail = 0.0;
    let mut k = sigma.len();
    while k > 0 {
        let next = tail + sigma[k - 1] * sigma[k - 1];
        if next > budget {
            break;
        }
        tail = next;
        k -= 1;
    }
    k.min(numerical)
}

/// Truncated singular value decomposition with relative Frobenius tolerance.
///
/// Returns the smallest rank `k` such that `||A - U_k S_k V_k^T||_F <= eps ||A||_F`.
/// With `eps = 0` the numerical rank is kept. Columns of `U` are sign-normalized
/// so that their largest-magnitude entry is positive.
pub fn truncated_svd(a: &DMatrix<f64>, eps: f64) -> Result<TruncatedSvdResult> {
    let (rows, cols) = a.shape();
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidInput("truncated_svd of an empty matrix".into()));
    }
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::InvalidInput(format!(
            "truncation tolerance {eps} outside [0, 1]"
        )));
    }
    ensure_finite(a, "matrix")?;
    if a.iter().all(|v| *v == 0.0) {
        return Ok(TruncatedSvdResult::empty(rows, cols, vec![0.0; rows.min(cols)]));
    }

    let svd = a
        .clone()
        .try_svd(true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::InvalidInput("SVD iteration failed to converge".into()))?;
    let u_full = svd.u.expect("left singular vectors requested");
    let vt_full = svd.v_t.expect("right singular vectors requested");
    let spectrum: Vec<f64> = svd.singular_values.iter().copied().collect();

    let k = truncation_rank(&spectrum, eps, rows, cols);
    if k == 0 {
        return Ok(TruncatedSvdResult::empty(rows, cols, spectrum));
    }

    let mut u = u_full.columns(0, k).into_owned();
    let mut v = vt_full.rows(0, k).transpose();
    for j in 0..k {
        let col = u.column(j);
        let pivot = col.iamax();
        if col[pivot] < 0.0 {
            u.column_mut(j).neg_mut();
            v.column_mut(j).neg_mut();
        }
    }
    let sigma = DVector::from_iterator(k, spectrum.iter().take(k).copied());
    Ok(TruncatedSvdResult {
        u,
        sigma,
        v,
        retained_rank: k,
        spectrum,
    })
}
