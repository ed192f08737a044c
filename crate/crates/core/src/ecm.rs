//! Empirical cubature: element selection and positive weights reproducing
//! sums of projected elemental residuals.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{truncated_svd, ActiveSet, EnterOutcome};
use crate::rom::RomTrajectory;
use crate::testbed::{assemble_residual, elemental_jacobian, elemental_residual, gather_rows, ElementPatch, FeProblem, Frame, Step};

/// Weights below this are pruned from a quadrature.
pub const WEIGHT_FLOOR: f64 = 1e-12;

/// Smallest relative fit the selection loop treats as exact.
pub const FIT_FLOOR: f64 = 64.0 * f64::EPSILON;

/// The fit tolerance the selection actually enforces for a requested one.
pub fn effective_fit_tolerance(eps_fit: f64) -> f64 {
    eps_fit.max(FIT_FLOOR)
}

/// The per-element quantity whose element sum the cubature reproduces.
#[derive(Debug, Clone, Copy)]
pub enum Integrand<'a> {
    /// `Psi^{eT} R^e` for a fixed left basis (`Psi = Phi` for Galerkin).
    Projected(&'a DMatrix<f64>),
    /// `Phi^{eT} J^{eT} R^{Le}`, the least-squares integrand; `R^{Le}` is the
    /// assembled residual gathered at the element's DOFs.
    JacobianWeighted(&'a DMatrix<f64>),
}

impl Integrand<'_> {
    pub fn dim(&self) -> usize {
        match self {
            Integrand::Projected(b) | Integrand::JacobianWeighted(b) => b.ncols(),
        }
    }
}

/// A converged (or iterate) state with the frame it was solved in.
#[derive(Debug, Clone)]
pub struct TrainingState {
    pub u: DVector<f64>,
    pub u_ref: DVector<f64>,
    pub step: Step,
    pub mu: Vec<f64>,
}

impl TrainingState {
    pub fn frame(&self) -> Frame<'_> {
        Frame { u_ref: &self.u_ref, step: self.step, mu: &self.mu }
    }
}

/// Converged states of reduced trajectories, parameter-major, timestep-minor.
/// With `include_iterates`, non-converged Newton iterates are added before
/// each converged state.
pub fn training_states(
    problem: &dyn FeProblem,
    parameters: &[Vec<f64>],
    trajectories: &[RomTrajectory],
    phi: &DMatrix<f64>,
    include_iterates: bool,
) -> Result<Vec<TrainingState>> {
    if parameters.len() != trajectories.len() {
        return Err(Error::InvalidInput(format!(
            "{} parameters but {} trajectories",
            parameters.len(),
            trajectories.len()
        )));
    }
    let mut out = Vec::new();
    for (mu, traj) in parameters.iter().zip(trajectories) {
        if traj.steps.len() != problem.steps().len() {
            return Err(Error::InvalidInput(format!(
                "trajectory has {} steps, problem has {}",
                traj.steps.len(),
                problem.steps().len()
            )));
        }
        let mut u_ref = problem.initial_state(mu);
        for (step, s) in problem.steps().iter().zip(&traj.steps) {
            if s.state.u_tilde.len() != u_ref.len() {
                return Err(Error::InvalidInput("trajectory state size mismatch".into()));
            }
            if include_iterates {
                let mut q = DVector::zeros(phi.ncols());
                for d in &s.directions {
                    out.push(TrainingState { u: &u_ref + phi * &q, u_ref: u_ref.clone(), step: *step, mu: mu.clone() });
                    q += d;
                }
            }
            out.push(TrainingState {
                u: s.state.u_tilde.clone(),
                u_ref: u_ref.clone(),
                step: *step,
                mu: mu.clone(),
            });
            u_ref = s.state.u_tilde.clone();
        }
    }
    Ok(out)
}

/// Integrand of every element (or of `elements` only) at one state.
pub fn element_integrands(
    problem: &dyn FeProblem,
    integrand: Integrand,
    elements: &[usize],
    u: &DVector<f64>,
    frame: &Frame,
) -> Result<Vec<DVector<f64>>> {
    let map = problem.assembly();
    match integrand {
        Integrand::Projected(psi) => elements
            .iter()
            .map(|&e| {
                let re = elemental_residual(problem, e, u, frame)?;
                Ok(gather_rows(map, e, psi).tr_mul(&re))
            })
            .collect(),
        Integrand::JacobianWeighted(phi) => {
            let r = assemble_residual(problem, u, frame)?;
            elements
                .iter()
                .map(|&e| {
                    let je = elemental_jacobian(problem, e, u, frame)?;
                    let rle = DVector::from_vec(map.gather(e, r.as_slice()));
                    Ok((je * gather_rows(map, e, phi)).tr_mul(&rle))
                })
                .collect()
        }
    }
}

/// `X` with one row block per training state and one column per element.
#[derive(Debug, Clone)]
pub struct EcmTrainingMatrix {
    pub x: DMatrix<f64>,
    /// `X 1`.
    pub b: DVector<f64>,
    /// Rows per training state (the integrand dimension).
    pub block_rows: usize,
}

impl EcmTrainingMatrix {
    pub fn states(&self) -> usize {
        self.x.nrows().checked_div(self.block_rows).unwrap_or(0)
    }
}

pub fn build_ecm_training_matrix(
    problem: &dyn FeProblem,
    integrand: Integrand,
    states: &[TrainingState],
) -> Result<EcmTrainingMatrix> {
    let n_full = problem.assembly().free_dofs();
    let dim = integrand.dim();
    match integrand {
        Integrand::Projected(b) | Integrand::JacobianWeighted(b) if b.nrows() != n_full => {
            return Err(Error::InvalidInput(format!(
                "integrand basis has {} rows, expected {n_full}",
                b.nrows()
            )));
        }
        _ => {}
    }
    if states.is_empty() || dim == 0 {
        return Err(Error::EmptySnapshots);
    }
    let elements: Vec<usize> = (0..problem.assembly().element_count()).collect();
    let blocks: Vec<Vec<DVector<f64>>> = states
        .par_iter()
        .map(|s| {
            if s.u.len() != n_full || s.u_ref.len() != n_full {
                return Err(Error::InvalidInput("training state size mismatch".into()));
            }
            element_integrands(problem, integrand, &elements, &s.u, &s.frame())
        })
        .collect::<Result<_>>()?;
    let mut x = DMatrix::zeros(dim * states.len(), elements.len());
    for (k, block) in blocks.iter().enumerate() {
        for (e, col) in block.iter().enumerate() {
            x.view_mut((k * dim, e), (dim, 1)).copy_from(col);
        }
    }
    let b = row_sums(&x);
    Ok(EcmTrainingMatrix { x, b, block_rows: dim })
}

fn row_sums(x: &DMatrix<f64>) -> DVector<f64> {
    let mut b = DVector::zeros(x.nrows());
    for col in x.column_iter() {
        b += col;
    }
    b
}

#[derive(Debug, Clone)]
pub struct CompressedTraining {
    /// `Theta`, with orthonormal rows.
    pub theta: DMatrix<f64>,
    /// `Theta 1`.
    pub b_theta: DVector<f64>,
    pub sigma: Vec<f64>,
}

/// `X = U Sigma Theta + E` truncated at relative Frobenius tolerance `eps`.
///
/// Tall matrices are first reduced by a QR factorization; the right
/// singular vectors of `R` are those of `X`.
pub fn compress_training_matrix(x: &DMatrix<f64>, eps: f64) -> Result<CompressedTraining> {
    let cols = x.ncols();
    let svd = if x.nrows() > 2 * cols {
        let r = x.clone().qr().r();
        truncated_svd(&r, eps)?
    } else {
        truncated_svd(x, eps)?
    };
    let theta = svd.v.transpose();
    let b_theta = row_sums(&theta);
    Ok(CompressedTraining {
        theta,
        b_theta,
        sigma: svd.sigma.iter().copied().collect(),
    })
}

/// Appends the normalized component of `1` orthogonal to the row space of
/// `Theta`, so that the weights also reproduce the element count.
pub fn with_constant_row(c: &CompressedTraining) -> CompressedTraining {
    let l = c.theta.ncols();
    let ones = DVector::from_element(l, 1.0);
    let rest = &ones - c.theta.tr_mul(&(&c.theta * &ones));
    let norm = rest.norm();
    if norm <= 1e-10 * (l as f64).sqrt() {
        return c.clone();
    }
    let mut theta = c.theta.clone().insert_row(c.theta.nrows(), 0.0);
    let last = theta.nrows() - 1;
    theta.row_mut(last).copy_from(&(rest / norm).transpose());
    let b_theta = row_sums(&theta);
    CompressedTraining { theta, b_theta, sigma: c.sigma.clone() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcmQuadrature {
    pub z: Vec<usize>,
    pub omega: Vec<f64>,
    /// `||Theta_z omega - b_Theta|| / ||b_Theta||`.
    pub fit_residual: f64,
    pub converged: bool,
    /// Relative fit after every greedy iteration.
    pub fit_history: Vec<f64>,
    /// Rows of the compressed training matrix; bounds `z.len()`.
    pub theta_rank: usize,
}

impl EcmQuadrature {
    /// Every element with unit weight.
    pub fn full(elements: usize) -> Self {
        Self {
            z: (0..elements).collect(),
            omega: vec![1.0; elements],
            fit_residual: 0.0,
            converged: true,
            fit_history: vec![0.0],
            theta_rank: elements,
        }
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }
}

/// Greedy element selection with nonnegative least-squares weights.
///
/// Each iteration adds the unselected column whose component orthogonal to
/// the selected columns has the largest positive cosine with the current
/// residual `b_Theta - Theta_z omega`, which is the column that reduces the
/// unconstrained fit most, and then restores the nonnegative optimum over
/// the selected set, which may drop elements.
pub fn select_elements(theta: &DMatrix<f64>, b_theta: &DVector<f64>, eps_fit: f64) -> Result<EcmQuadrature> {
    let (p, l) = theta.shape();
    if p == 0 || l == 0 {
        return Err(Error::InvalidInput("empty cubature training matrix".into()));
    }
    if b_theta.len() != p {
        return Err(Error::InvalidInput(format!("b has length {}, expected {p}", b_theta.len())));
    }
    if !(eps_fit >= 0.0) {
        return Err(Error::InvalidInput(format!("fit tolerance {eps_fit} must be nonnegative")));
    }
    let b_norm = b_theta.norm();
    if b_norm == 0.0 {
        return Ok(EcmQuadrature {
            z: vec![],
            omega: vec![],
            fit_residual: 0.0,
            converged: true,
            fit_history: vec![0.0],
            theta_rank: p,
        });
    }
    let target = effective_fit_tolerance(eps_fit);
    let norm_sq: Vec<f64> = theta.column_iter().map(|c| c.norm_squared()).collect();
    let mut set = ActiveSet::new(theta, b_theta);
    // Squared norms of the projections of every column onto the span of
    // the selected columns, kept in step with the active set's basis.
    let mut projected = vec![0.0; l];
    let mut basis_seen = 0;
    let mut rebuilds_seen = 0;
    let mut excluded = vec![false; l];
    let mut history = Vec::new();
    let mut converged = false;
    for _ in 0..10 * l {
        let residual = set.residual();
        let fit = residual.norm() / b_norm;
        history.push(fit);
        if fit <= target {
            converged = true;
            break;
        }
        if set.passive().len() >= p {
            break;
        }
        if set.rebuilds() != rebuilds_seen {
            projected.iter_mut().for_each(|v| *v = 0.0);
            basis_seen = 0;
            rebuilds_seen = set.rebuilds();
        }
        for q in &set.basis()[basis_seen..] {
            let c = theta.tr_mul(q);
            projected.iter_mut().zip(c.iter()).for_each(|(v, ci)| *v += ci * ci);
        }
        basis_seen = set.basis().len();
        let corr = theta.tr_mul(&residual);
        let score = |e: usize| {
            let orth = (norm_sq[e] - projected[e]).max(0.0);
            (orth > 1e-24 * norm_sq[e]).then(|| corr[e] / orth.sqrt())
        };
        let pick = (0..l)
            .filter(|&e| !excluded[e] && !set.is_passive(e) && corr[e] > 0.0)
            .filter_map(|e| score(e).map(|s| (e, s)))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(e, _)| e);
        let Some(t) = pick else { break };
        match set.enter(t) {
            EnterOutcome::Accepted => excluded.iter_mut().for_each(|x| *x = false),
            EnterOutcome::Dependent | EnterOutcome::Rejected => excluded[t] = true,
        }
    }

    let w = set.solution();
    let mut z: Vec<usize> = set.passive().iter().copied().filter(|&e| w[e] >= WEIGHT_FLOOR).collect();
    z.sort_unstable();
    let omega: Vec<f64> = z.iter().map(|&e| w[e]).collect();
    let mut fitted = b_theta.clone();
    for (&e, &we) in z.iter().zip(&omega) {
        fitted.axpy(-we, &theta.column(e), 1.0);
    }
    let fit_residual = fitted.norm() / b_norm;
    Ok(EcmQuadrature {
        z,
        omega,
        fit_residual,
        converged: converged && fit_residual <= target,
        fit_history: history,
        theta_rank: p,
    })
}

/// `Union_{e in z} patch(e)`, sorted.
pub fn build_complementary_mesh(z: &[usize], patches: &[ElementPatch]) -> Result<Vec<usize>> {
    let mut out = BTreeSet::new();
    for &e in z {
        let patch = patches
            .get(e)
            .ok_or_else(|| Error::InvalidInput(format!("element {e} has no patch")))?;
        out.extend(patch.patch.iter().copied());
    }
    Ok(out.into_iter().collect())
}

/// Per training state: `||sum_z omega_e X_e - sum_e X_e|| / ||X_block||_F`.
pub fn quadrature_exactness(training: &EcmTrainingMatrix, quadrature: &EcmQuadrature) -> Vec<f64> {
    let m = training.block_rows;
    (0..training.states())
        .map(|k| {
            let block = training.x.rows(k * m, m);
            let full = training.b.rows(k * m, m).into_owned();
            let mut approx = DVector::zeros(m);
            for (&e, &w) in quadrature.z.iter().zip(&quadrature.omega) {
                approx.axpy(w, &block.column(e), 1.0);
            }
            let scale = block.norm();
            if scale == 0.0 { 0.0 } else { (approx - full).norm() / scale }
        })
        .collect()
}

/// `X` with every state block scaled to unit Frobenius norm. Exact fits
/// are unchanged by row scaling; the truncation then treats nearly
/// converged states on par with large-residual iterates.
pub fn balanced_training_matrix(training: &EcmTrainingMatrix) -> DMatrix<f64> {
    let m = training.block_rows;
    let mut x = training.x.clone();
    for k in 0..training.states() {
        let mut block = x.rows_mut(k * m, m);
        let norm = block.norm();
        if norm > 0.0 {
            block /= norm;
        }
    }
    x
}

/// Balance, compress, augment and select in one go.
pub fn train_quadrature(training: &EcmTrainingMatrix, eps_ecm: f64) -> Result<EcmQuadrature> {
    let x = balanced_training_matrix(training);
    let compressed = with_constant_row(&compress_training_matrix(&x, eps_ecm)?);
    select_elements(&compressed.theta, &compressed.b_theta, eps_ecm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testbed::{element_patches, Mesh};

    #[test]
    fn identical_columns_need_one_element() {
        let c = DVector::from_vec(vec![0.6, 0.8]);
        let theta = DMatrix::from_fn(2, 5, |i, _| c[i]);
        let q = select_elements(&theta, &(&c * 5.0), 0.0).unwrap();
        assert_eq!(q.z.len(), 1);
        assert!((q.omega[0] - 5.0).abs() < 1e-14);
        assert!(q.fit_residual < 1e-15);
    }

    #[test]
    fn identity_needs_every_element() {
        let theta = DMatrix::identity(4, 4);
        let q = select_elements(&theta, &DVector::from_element(4, 1.0), 0.0).unwrap();
        assert_eq!(q.z, vec![0, 1, 2, 3]);
        assert!(q.omega.iter().all(|w| (w - 1.0).abs() < 1e-15));
        assert!(q.converged);
    }

    #[test]
    fn compression_has_orthonormal_rows() {
        let x = DMatrix::from_fn(9, 4, |i, j| ((i + 2 * j) as f64).sin() + (j as f64));
        let c = compress_training_matrix(&x, 0.0).unwrap();
        let g = &c.theta * c.theta.transpose();
        assert!((g - DMatrix::identity(c.theta.nrows(), c.theta.nrows())).amax() < 1e-12);
        let rank1 = DMatrix::from_fn(30, 4, |i, j| (i + 1) as f64 * (j + 1) as f64);
        assert_eq!(compress_training_matrix(&rank1, 0.0).unwrap().theta.nrows(), 1);
        let aug = with_constant_row(&compress_training_matrix(&rank1, 0.0).unwrap());
        assert_eq!(aug.theta.nrows(), 2);
        let g = &aug.theta * aug.theta.transpose();
        assert!((g - DMatrix::identity(2, 2)).amax() < 1e-12);
    }

    #[test]
    fn complementary_mesh_of_chain() {
        let mesh = Mesh::interval(5, 1.0);
        let patches = element_patches(&mesh);
        assert_eq!(build_complementary_mesh(&[1], &patches).unwrap(), vec![0, 1, 2]);
        assert_eq!(build_complementary_mesh(&[0, 1, 2, 3, 4], &patches).unwrap(), vec![0, 1, 2, 3, 4]);
        assert!(build_complementary_mesh(&[7], &patches).is_err());
    }

    #[test]
    fn zero_target_gives_empty_rule() {
        let q = select_elements(&DMatrix::identity(2, 3), &DVector::zeros(2), 1e-6).unwrap();
        assert!(q.is_empty() && q.converged);
    }
}
