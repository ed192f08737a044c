use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use pgrom::linalg::matfile::{decode_matrix, encode_matrix};
use pgrom::linalg::{nonneg_least_squares, orthonormality_defect, qr_least_squares, truncated_svd};

fn matrix(rows: std::ops::RangeInclusive<usize>, cols: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = DMatrix<f64>> {
    (rows, cols).prop_flat_map(|(r, c)| {
        prop::collection::vec(-1.0..1.0f64, r * c).prop_map(move |v| DMatrix::from_vec(r, c, v))
    })
}

/// Smallest residual over nonnegative combinations, by enumerating every
/// support and keeping the feasible unconstrained solutions.
fn brute_force_nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> f64 {
    let n = a.ncols();
    let mut best = b.norm();
    for mask in 1u32..(1 << n) {
        let cols: Vec<usize> = (0..n).filter(|j| mask & (1 << j) != 0).collect();
        let sub = a.select_columns(&cols);
        let Ok(w) = sub.clone().svd(true, true).solve(b, 1e-12) else { continue };
        if w.iter().all(|&x| x >= 0.0) {
            best = best.min((&sub * &w - b).norm());
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn svd_truncation_meets_its_budget(a in matrix(1..=9, 1..=9), eps in 0.0..=1.0f64) {
        let t = truncated_svd(&a, eps).unwrap();
        let err = (&a - t.reconstruct()).norm();
        prop_assert!(err <= eps * a.norm() + 1e-12 * a.norm(), "err {err} eps {eps}");
        prop_assert_eq!(t.u.ncols(), t.retained_rank);
        if t.retained_rank > 0 {
            prop_assert!(orthonormality_defect(&t.u) <= 1e-10);
        }
        prop_assert!(t.sigma.as_slice().windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn svd_is_bitwise_deterministic(a in matrix(1..=8, 1..=8), eps in 0.0..=0.5f64) {
        let x = truncated_svd(&a, eps).unwrap();
        let y = truncated_svd(&a, eps).unwrap();
        let bits = |m: &DMatrix<f64>| m.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&x.u), bits(&y.u));
        prop_assert_eq!(bits(&x.v), bits(&y.v));
        prop_assert_eq!(x.spectrum, y.spectrum);
    }

    #[test]
    fn qr_matches_normal_equations(raw in matrix(4..=12, 1..=4), seed in prop::collection::vec(-1.0..1.0f64, 12)) {
        // A dominant identity block keeps W well conditioned.
        let mut w = raw;
        for j in 0..w.ncols() {
            w[(j, j)] += 4.0;
        }
        let r = DVector::from_fn(w.nrows(), |i, _| seed[i]);
        let x = qr_least_squares(&w, &r).unwrap();
        let normal = (w.transpose() * &w).cholesky().unwrap().solve(&(w.transpose() * &r));
        prop_assert!((&x - &normal).norm() <= 1e-8 * normal.norm().max(1e-300));
    }

    #[test]
    fn nnls_matches_enumeration(a in matrix(1..=5, 1..=6), seed in prop::collection::vec(-1.0..1.0f64, 5)) {
        let b = DVector::from_fn(a.nrows(), |i, _| seed[i]);
        let w = nonneg_least_squares(&a, &b).unwrap();
        prop_assert!(w.iter().all(|&x| x >= 0.0));
        let got = (&a * &w - &b).norm();
        let best = brute_force_nnls(&a, &b);
        prop_assert!(got <= best + 1e-9, "nnls {got} vs enumeration {best}");
        // Dual feasibility: no column can still reduce the residual.
        let grad = a.transpose() * (&b - &a * &w);
        prop_assert!(grad.iter().all(|&g| g <= 1e-9));
    }

    #[test]
    fn matrix_files_round_trip_bits(a in matrix(0..=6, 0..=6)) {
        let back = decode_matrix(&encode_matrix(&a), std::path::Path::new("mem")).unwrap();
        prop_assert_eq!(back.shape(), a.shape());
        prop_assert!(back.iter().zip(a.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}
