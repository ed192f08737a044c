use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative threshold on `|R_ii|` below which a column counts as dependent.
pub const RANK_TOLERANCE: f64 = 1e-12;

/// Solves `min ||W x - r||_2` through a Householder QR factorization of `W`.
pub fn qr_least_squares(w: &DMatrix<f64>, r: &DVector<f64>) -> Result<DVector<f64>> {
    let (m, n) = w.shape();
    if n == 0 || m < n {
        return Err(Error::InvalidInput(format!(
            "least squares needs rows >= cols >= 1, got {m}x{n}"
        )));
    }
    if r.len() != m {
        return Err(Error::InvalidInput(format!(
            "right-hand side has length {}, expected {m}",
            r.len()
        )));
    }
    let qr = w.clone().qr();
    let rf = qr.r();
    let max_diag = (0..n).map(|i| rf[(i, i)].abs()).fold(0.0, f64::max);
    if let Some(column) = (0..n).find(|&i| rf[(i, i)].abs() <= RANK_TOLERANCE * max_diag) {
        return Err(Error::Singular { column });
    }
    let mut qtr = r.clone();
    qr.q_tr_mul(&mut qtr);
    let head = qtr.rows(0, n).into_owned();
    rf.solve_upper_triangular(&head)
        .ok_or(Error::Singular { column: n - 1 })
}

/// Solves the square system `A x = b` by LU with partial pivoting.
pub fn solve_square(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if !a.is_square() || a.nrows() != b.len() {
        return Err(Error::InvalidInput(format!(
            "square solve with a {}x{} matrix and rhs of length {}",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    let lu = a.clone().lu();
    let u = lu.u();
    let max_diag = (0..u.nrows()).map(|i| u[(i, i)].abs()).fold(0.0, f64::max);
    if let Some(column) = (0..u.nrows()).find(|&i| u[(i, i)].abs() <= 1e-14 * max_diag) {
        return Err(Error::Singular { column });
    }
    lu.solve(b).ok_or(Error::Singular { column: 0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn identity_returns_rhs() {
        let r = DVector::from_vec(vec![1.5, -2.0, 3.25]);
        let x = qr_least_squares(&DMatrix::identity(3, 3), &r).unwrap();
        assert_relative_eq!(x, r, epsilon = 1e-15);
    }

    #[test]
    fn two_equal_equations_average() {
        // Normal equation 2x = 4.
        let w = DMatrix::from_column_slice(2, 1, &[1.0, 1.0]);
        let x = qr_least_squares(&w, &DVector::from_vec(vec![1.0, 3.0])).unwrap();
        assert_relative_eq!(x[0], 2.0, epsilon = 1e-14);
    }

    #[test]
    fn consistent_square_system_is_exact() {
        let w = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 2.0]);
        let x0 = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let x = qr_least_squares(&w, &(&w * &x0)).unwrap();
        assert_relative_eq!(x, x0, epsilon = 1e-12);
    }

    #[test]
    fn rank_deficient_reports_column() {
        let w = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        let err = qr_least_squares(&w, &DVector::from_vec(vec![1.0, 2.0, 3.0])).unwrap_err();
        assert!(matches!(err, Error::Singular { column: 1 }));
    }

    #[test]
    fn underdetermined_is_rejected() {
        let w = DMatrix::zeros(1, 2);
        assert!(matches!(
            qr_least_squares(&w, &DVector::zeros(1)),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn square_solve_detects_singularity() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(
            solve_square(&a, &DVector::zeros(2)),
            Err(Error::Singular { .. })
        ));
    }

    proptest! {
        #[test]
        fn matches_normal_equations_and_orthogonal_residual(
            m in 3usize..9,
            n in 1usize..4,
            seed in proptest::collection::vec(-1.0f64..1.0, 9 * 4 + 9),
        ) {
            prop_assume!(n <= m);
            let mut w = DMatrix::from_fn(m, n, |i, j| seed[i * 4 + j]);
            for j in 0..n {
                w[(j, j)] += 3.0;
            }
            let r = DVector::from_fn(m, |i, _| seed[36 + i]);
            let x = qr_least_squares(&w, &r).unwrap();
            let wt = w.transpose();
            let normal = (&wt * &w).lu().solve(&(&wt * &r)).unwrap();
            let scale = normal.norm().max(1e-300);
            prop_assert!((&x - &normal).norm() <= 1e-8 * scale.max(1.0));
            let resid = &w * &x - &r;
            prop_assert!((&wt * resid).norm() <= 1e-10 * r.norm() * w.norm().max(1.0));
        }
    }
}
