use nalgebra::{DMatrix, DVector};

use super::svd::ensure_finite;
use crate::error::{Error, Result};

/// A column whose component orthogonal to the passive set is below this
/// fraction of its norm is treated as linearly dependent.
const DEPENDENCE_TOLERANCE: f64 = 1e-12;

/// Outcome of offering a column to [`ActiveSet::enter`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnterOutcome {
    Accepted,
    /// The column lies in the span of the passive columns.
    Dependent,
    /// The column was removed again by the feasibility loop with zero weight.
    Rejected,
}

/// Lawson-Hanson active-set state over the columns of `A`.
///
/// The passive set is kept in a thin QR factorization that is grown by
/// Gram-Schmidt with reorthogonalization and rebuilt whenever columns leave.
/// The entering column is chosen by the caller, which lets the empirical
/// cubature greedy loop reuse the same feasibility machinery.
pub struct ActiveSet<'a> {
    a: &'a DMatrix<f64>,
    b: &'a DVector<f64>,
    x: DVector<f64>,
    passive: Vec<usize>,
    q: Vec<DVector<f64>>,
    // Column k of R, length k + 1.
    r: Vec<Vec<f64>>,
    rebuilds: usize,
}

impl<'a> ActiveSet<'a> {
    pub fn new(a: &'a DMatrix<f64>, b: &'a DVector<f64>) -> Self {
        Self {
            a,
            b,
            x: DVector::zeros(a.ncols()),
            passive: Vec::new(),
            q: Vec::new(),
            r: Vec::new(),
            rebuilds: 0,
        }
    }

    pub fn passive(&self) -> &[usize] {
        &self.passive
    }

    pub fn is_passive(&self, j: usize) -> bool {
        self.passive.contains(&j)
    }

    /// Orthonormal basis of the passive columns, in passive order.
    pub fn basis(&self) -> &[DVector<f64>] {
        &self.q
    }

    /// How often the factorization was rebuilt after columns left; a change
    /// invalidates anything derived from earlier basis vectors.
    pub fn rebuilds(&self) -> usize {
        self.rebuilds
    }

    /// Full-length solution, zero outside the passive set.
    pub fn solution(&self) -> &DVector<f64> {
        &self.x
    }

    pub fn residual(&self) -> DVector<f64> {
        let mut r = self.b.clone();
        for &j in &self.passive {
            r.axpy(-self.x[j], &self.a.column(j), 1.0);
        }
        r
    }

    /// `A^T (b - A x)`, the negative gradient of `1/2 ||A x - b||^2`.
    pub fn dual(&self) -> DVector<f64> {
        self.a.tr_mul(&self.residual())
    }

    fn push_column(&mut self, j: usize) -> bool {
        let col = self.a.column(j).into_owned();
        let norm = col.norm();
        if norm == 0.0 {
            return false;
        }
        let mut v = col;
        let mut coeffs = vec![0.0; self.q.len() + 1];
        for _ in 0..2 {
            for (k, qk) in self.q.iter().enumerate() {
                let c = qk.dot(&v);
                coeffs[k] += c;
                v.axpy(-c, qk, 1.0);
            }
        }
        let rest = v.norm();
        if rest <= DEPENDENCE_TOLERANCE * norm {
            return false;
        }
        coeffs[self.q.len()] = rest;
        self.q.push(v / rest);
        self.r.push(coeffs);
        self.passive.push(j);
        true
    }

    fn rebuild(&mut self, keep: Vec<usize>) {
        self.rebuilds += 1;
        self.passive.clear();
        self.q.clear();
        self.r.clear();
        for j in keep {
            if !self.push_column(j) {
                self.x[j] = 0.0;
            }
        }
    }

    /// Unconstrained least squares restricted to the passive columns.
    fn solve_passive(&self) -> Vec<f64> {
        let k = self.passive.len();
        let mut y: Vec<f64> = self.q.iter().map(|qk| qk.dot(self.b)).collect();
        for i in (0..k).rev() {
            let mut s = y[i];
            for (c, rc) in self.r.iter().enumerate().skip(i + 1) {
                s -= rc[i] * y[c];
            }
            y[i] = s / self.r[i][i];
        }
        y
    }

    /// Adds column `t` to the passive set and restores feasibility.
    pub fn enter(&mut self, t: usize) -> EnterOutcome {
        if self.is_passive(t) {
            return EnterOutcome::Rejected;
        }
        if !self.push_column(t) {
            return EnterOutcome::Dependent;
        }
        loop {
            let z = self.solve_passive();
            if z.iter().all(|&v| v > 0.0) {
                for (&j, &v) in self.passive.iter().zip(&z) {
                    self.x[j] = v;
                }
                break;
            }
            // Step from the feasible x towards z until the first weight hits zero.
            let mut alpha = f64::INFINITY;
            let mut blocking = t;
            for (&j, &zj) in self.passive.iter().zip(&z) {
                if zj <= 0.0 {
                    let xj = self.x[j];
                    let ratio = xj / (xj - zj);
                    if ratio < alpha {
                        alpha = ratio;
                        blocking = j;
                    }
                }
            }
            for (&j, &zj) in self.passive.iter().zip(&z) {
                self.x[j] += alpha * (zj - self.x[j]);
            }
            self.x[blocking] = 0.0;
            let mut keep = Vec::with_capacity(self.passive.len());
            for &j in &self.passive {
                if self.x[j] > 0.0 {
                    keep.push(j);
                } else {
                    self.x[j] = 0.0;
                }
            }
            let t_dropped = !keep.contains(&t);
            self.rebuild(keep);
            if t_dropped && alpha == 0.0 {
                return EnterOutcome::Rejected;
            }
            if self.passive.is_empty() {
                break;
            }
        }
        if self.is_passive(t) {
            EnterOutcome::Accepted
        } else {
            EnterOutcome::Rejected
        }
    }
}

/// Solves `min ||A w - b||_2` subject to `w >= 0` (Lawson-Hanson active set).
pub fn nonneg_least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let (rows, cols) = a.shape();
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidInput("nnls with an empty matrix".into()));
    }
    if b.len() != rows {
        return Err(Error::InvalidInput(format!(
            "nnls right-hand side has length {}, expected {rows}",
            b.len()
        )));
    }
    ensure_finite(a, "nnls matrix")?;
    if !b.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidInput("nnls right-hand side has non-finite entries".into()));
    }
    if b.iter().all(|v| *v == 0.0) {
        return Ok(DVector::zeros(cols));
    }

    let atb_inf = a.tr_mul(b).amax();
    let tol = 1e-10 * atb_inf;
    let mut set = ActiveSet::new(a, b);
    let mut excluded = vec![false; cols];
    for _ in 0..10 * cols {
        let w = set.dual();
        let candidate = (0..cols)
            .filter(|&j| !excluded[j] && !set.is_passive(j) && w[j] > tol)
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(t) = candidate else { break };
        match set.enter(t) {
            EnterOutcome::Accepted => excluded.iter_mut().for_each(|e| *e = false),
            EnterOutcome::Dependent | EnterOutcome::Rejected => excluded[t] = true,
        }
    }
    Ok(set.solution().clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// Exhaustive oracle: the NNLS optimum is the best unconstrained
    /// least-squares fit over supports whose solution is strictly positive.
    fn brute_force(a: &DMatrix<f64>, b: &DVector<f64>) -> (DVector<f64>, f64) {
        let n = a.ncols();
        let mut best = (DVector::zeros(n), b.norm());
        for mask in 1u32..(1 << n) {
            let cols: Vec<usize> = (0..n).filter(|j| mask & (1 << j) != 0).collect();
            let sub = DMatrix::from_fn(a.nrows(), cols.len(), |i, k| a[(i, cols[k])]);
            let svd = sub.clone().svd(true, true);
            if svd.rank(1e-10 * svd.singular_values[0]) < cols.len() {
                continue;
            }
            let z = svd.solve(b, 1e-14).unwrap();
            if z.iter().any(|v| *v <= 0.0) {
                continue;
            }
            let res = (&sub * &z - b).norm();
            if res < best.1 - 1e-12 {
                let mut x = DVector::zeros(n);
                for (k, &j) in cols.iter().enumerate() {
                    x[j] = z[k];
                }
                best = (x, res);
            }
        }
        best
    }

    #[test]
    fn identity_returns_nonnegative_rhs() {
        let b = DVector::from_vec(vec![1.0, 2.0]);
        let w = nonneg_least_squares(&DMatrix::identity(2, 2), &b).unwrap();
        assert_relative_eq!(w, b, epsilon = 1e-15);
    }

    #[test]
    fn identity_clamps_negative_component() {
        let b = DVector::from_vec(vec![-1.0, 2.0]);
        let w = nonneg_least_squares(&DMatrix::identity(2, 2), &b).unwrap();
        assert_relative_eq!(w, DVector::from_vec(vec![0.0, 2.0]), epsilon = 1e-15);
        let (oracle, _) = brute_force(&DMatrix::identity(2, 2), &b);
        assert_relative_eq!(w, oracle, epsilon = 1e-14);
    }

    #[test]
    fn underdetermined_consistent_system_fits_exactly() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let b = DVector::from_vec(vec![3.0]);
        let w = nonneg_least_squares(&a, &b).unwrap();
        assert!(w.iter().all(|v| *v >= 0.0));
        assert!((&a * &w - &b).norm() <= 1e-14);
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let w = nonneg_least_squares(&DMatrix::identity(3, 3), &DVector::zeros(3)).unwrap();
        assert_eq!(w, DVector::zeros(3));
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(nonneg_least_squares(&DMatrix::identity(2, 2), &DVector::zeros(3)).is_err());
        assert!(nonneg_least_squares(&DMatrix::zeros(0, 0), &DVector::zeros(0)).is_err());
    }

    proptest! {
        #[test]
        fn matches_exhaustive_support_search(
            rows in 2usize..7,
            cols in 1usize..7,
            data in proptest::collection::vec(-1.0f64..1.0, 7 * 6 + 7),
        ) {
            let a = DMatrix::from_fn(rows, cols, |i, j| data[i * 6 + j]);
            let b = DVector::from_fn(rows, |i, _| data[42 + i]);
            let w = nonneg_least_squares(&a, &b).unwrap();
            let (_, best) = brute_force(&a, &b);
            prop_assert!(w.iter().all(|v| *v >= 0.0));
            let res = (&a * &w - &b).norm();
            prop_assert!(res <= best + 1e-9 * (1.0 + b.norm()), "{res} vs {best}");

            let grad = a.tr_mul(&(&a * &w - &b));
            let scale = a.tr_mul(&b).amax().max(f64::MIN_POSITIVE);
            for j in 0..cols {
                if w[j] > 0.0 {
                    prop_assert!(grad[j].abs() <= 1e-8 * scale);
                } else {
                    prop_assert!(grad[j] >= -1e-8 * scale);
                }
            }
        }
    }
}
