//! Dense decomposition and least-squares kernels.

mod lstsq;
pub mod matfile;
mod nnls;
mod svd;

pub use lstsq::{qr_least_squares, solve_square, RANK_TOLERANCE};
pub use nnls::{nonneg_least_squares, ActiveSet, EnterOutcome};
pub use svd::{truncated_svd, truncation_rank, TruncatedSvdResult};

use nalgebra::DMatrix;

/// `||Q^T Q - I||_max` for a matrix with orthonormal columns.
pub fn orthonormality_defect(q: &DMatrix<f64>) -> f64 {
    let g = q.tr_mul(q);
    let mut worst: f64 = 0.0;
    for j in 0..g.ncols() {
        for i in 0..g.nrows() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).abs());
        }
    }
    worst
}
