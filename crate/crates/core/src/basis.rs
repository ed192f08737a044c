//! POD trial bases and the invariant left bases trained from a second,
//! reduced training pass.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fom::{solve_timestep_fom, NewtonSettings, Provenance, SnapshotSet};
use crate::linalg::truncated_svd;
use crate::rom::{run_rom_trajectory, RomSolver, RomTrajectory};
use crate::testbed::{jacobian_times, FeProblem, Frame};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisRole {
    RightPhi,
    LeftPsiJacobian,
    LeftPsiResidual,
}

/// Orthonormal basis with the tolerance it was truncated at.
#[derive(Debug, Clone)]
pub struct ReducedBasis {
    pub matrix: DMatrix<f64>,
    pub tolerance: f64,
    pub role: BasisRole,
    /// Full singular-value spectrum of the snapshot matrix.
    pub spectrum: Vec<f64>,
}

impl ReducedBasis {
    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainingLog {
    pub entries: Vec<TrainingLogEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingLogEntry {
    pub role: BasisRole,
    pub snapshot_rows: usize,
    pub snapshot_count: usize,
    pub retained_rank: usize,
    pub tolerance: f64,
    pub spectrum: Vec<f64>,
}

impl TrainingLog {
    pub fn record(&mut self, snapshots: &DMatrix<f64>, basis: &ReducedBasis) {
        self.entries.push(TrainingLogEntry {
            role: basis.role,
            snapshot_rows: snapshots.nrows(),
            snapshot_count: snapshots.ncols(),
            retained_rank: basis.dim(),
            tolerance: basis.tolerance,
            spectrum: basis.spectrum.clone(),
        });
    }
}

fn build_basis(snapshots: &DMatrix<f64>, eps: f64, role: BasisRole) -> Result<ReducedBasis> {
    if snapshots.ncols() == 0 || snapshots.nrows() == 0 {
        return Err(Error::EmptySnapshots);
    }
    let svd = truncated_svd(snapshots, eps)?;
    Ok(ReducedBasis {
        matrix: svd.u,
        tolerance: eps,
        role,
        spectrum: svd.spectrum,
    })
}

/// POD of the state snapshots `A^u`.
pub fn build_right_basis(a_u: &SnapshotSet, eps_u: f64) -> Result<ReducedBasis> {
    build_basis(&a_u.matrix, eps_u, BasisRole::RightPhi)
}

/// Truncated SVD of the stacked `J Phi` blocks.
pub fn build_left_basis_jacobian(s_j: &DMatrix<f64>, eps: f64) -> Result<ReducedBasis> {
    build_basis(s_j, eps, BasisRole::LeftPsiJacobian)
}

/// Truncated SVD of the stacked non-converged residuals.
pub fn build_left_basis_residual(s_r: &DMatrix<f64>, eps: f64) -> Result<ReducedBasis> {
    build_basis(s_r, eps, BasisRole::LeftPsiResidual)
}

/// `||(I - Psi_outer Psi_outer^T) Psi_inner||_F`.
pub fn projection_defect(outer: &DMatrix<f64>, inner: &DMatrix<f64>) -> f64 {
    let coeffs = outer.tr_mul(inner);
    (inner - outer * coeffs).norm()
}

/// Which solver generates the left-basis training data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LeftTrainingSource {
    /// The LSPG-ROM, as the training procedure prescribes.
    #[default]
    Lspg,
    /// Full-order solves, for ablation.
    Fom,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LeftTrainingOptions {
    pub source: LeftTrainingSource,
    /// Also keep the converged residual of every step in `S_R`.
    pub include_converged_residuals: bool,
}

/// Output of the second training pass.
#[derive(Debug, Clone)]
pub struct LeftTraining {
    /// `[J_i Phi]` at every converged state, `n` columns per state.
    pub s_j: SnapshotSet,
    /// Residuals at non-converged iterates.
    pub s_r: SnapshotSet,
    /// LSPG trajectories (empty for the full-order source).
    pub trajectories: Vec<RomTrajectory>,
    /// Timesteps that converged without a corrective step and contributed no residual.
    pub silent_steps: usize,
}

/// Runs the training pass once and collects both `S_J` and `S_R`.
pub fn collect_left_training(
    problem: &dyn FeProblem,
    phi: &DMatrix<f64>,
    parameters: &[Vec<f64>],
    settings: &NewtonSettings,
    options: LeftTrainingOptions,
) -> Result<LeftTraining> {
    if parameters.is_empty() {
        return Err(Error::InvalidInput("left-basis training without parameters".into()));
    }
    let n_full = problem.assembly().free_dofs();
    let per_parameter: Vec<ParameterBlocks> = parameters
        .par_iter()
        .enumerate()
        .map(|(j, mu)| match options.source {
            LeftTrainingSource::Lspg => lspg_blocks(problem, phi, j, mu, settings, options),
            LeftTrainingSource::Fom => fom_blocks(problem, phi, j, mu, settings, options),
        })
        .collect::<Result<_>>()?;

    let mut j_cols = Vec::new();
    let mut r_cols = Vec::new();
    let mut trajectories = Vec::new();
    let mut silent_steps = 0;
    for blocks in per_parameter {
        j_cols.extend(blocks.jacobian);
        r_cols.extend(blocks.residual);
        silent_steps += blocks.silent_steps;
        trajectories.extend(blocks.trajectory);
    }
    Ok(LeftTraining {
        s_j: SnapshotSet::from_columns(n_full, j_cols),
        s_r: SnapshotSet::from_columns(n_full, r_cols),
        trajectories,
        silent_steps,
    })
}

type Column = (DVector<f64>, Provenance);

struct ParameterBlocks {
    jacobian: Vec<Column>,
    residual: Vec<Column>,
    trajectory: Option<RomTrajectory>,
    silent_steps: usize,
}

fn push_jphi(out: &mut Vec<Column>, jphi: &DMatrix<f64>, parameter: usize, timestep: usize, iteration: usize) {
    for k in 0..jphi.ncols() {
        out.push((jphi.column(k).into_owned(), Provenance { parameter, timestep, iteration }));
    }
}

fn lspg_blocks(
    problem: &dyn FeProblem,
    phi: &DMatrix<f64>,
    j: usize,
    mu: &[f64],
    settings: &NewtonSettings,
    options: LeftTrainingOptions,
) -> Result<ParameterBlocks> {
    let traj = run_rom_trajectory(problem, &RomSolver::lspg(phi), mu, settings)?;
    let mut jacobian = Vec::new();
    let mut residual = Vec::new();
    let mut silent_steps = 0;
    let mut u_ref = problem.initial_state(mu);
    for (i, (step, out)) in problem.steps().iter().zip(&traj.steps).enumerate() {
        let frame = Frame { u_ref: &u_ref, step: *step, mu };
        let jphi = jacobian_times(problem, &out.state.u_tilde, &frame, phi)?;
        push_jphi(&mut jacobian, &jphi, j, i, out.trace.iterations());
        let kept = if options.include_converged_residuals {
            &out.residuals[..]
        } else {
            out.nonconverged_residuals()
        };
        if kept.is_empty() {
            silent_steps += 1;
        }
        for (k, r) in kept.iter().enumerate() {
            residual.push((r.clone(), Provenance { parameter: j, timestep: i, iteration: k }));
        }
        u_ref = out.state.u_tilde.clone();
    }
    Ok(ParameterBlocks { jacobian, residual, trajectory: Some(traj), silent_steps })
}

fn fom_blocks(
    problem: &dyn FeProblem,
    phi: &DMatrix<f64>,
    j: usize,
    mu: &[f64],
    settings: &NewtonSettings,
    options: LeftTrainingOptions,
) -> Result<ParameterBlocks> {
    let mut jacobian = Vec::new();
    let mut residual = Vec::new();
    let mut silent_steps = 0;
    let mut u_ref = problem.initial_state(mu);
    for (i, step) in problem.steps().iter().enumerate() {
        let out = solve_timestep_fom(problem, &u_ref, *step, mu, settings)
            .map_err(|e| e.context(format!("FOM at mu = {mu:?}, t = {}", step.time)))?;
        let frame = Frame { u_ref: &u_ref, step: *step, mu };
        let jphi = jacobian_times(problem, &out.u, &frame, phi)?;
        push_jphi(&mut jacobian, &jphi, j, i, out.trace.iterations());
        let keep = out.residuals.len() - usize::from(!options.include_converged_residuals);
        if keep == 0 {
            silent_steps += 1;
        }
        for (k, r) in out.residuals.into_iter().take(keep).enumerate() {
            residual.push((r, Provenance { parameter: j, timestep: i, iteration: k }));
        }
        u_ref = out.u;
    }
    Ok(ParameterBlocks { jacobian, residual, trajectory: None, silent_steps })
}

/// `S_J` from the LSPG training pass.
pub fn collect_jacobian_snapshots(
    problem: &dyn FeProblem,
    phi: &DMatrix<f64>,
    parameters: &[Vec<f64>],
    settings: &NewtonSettings,
) -> Result<DMatrix<f64>> {
    Ok(collect_left_training(problem, phi, parameters, settings, LeftTrainingOptions::default())?.s_j.matrix)
}

/// `S_R` from the LSPG training pass.
pub fn collect_residual_snapshots(
    problem: &dyn FeProblem,
    phi: &DMatrix<f64>,
    parameters: &[Vec<f64>],
    settings: &NewtonSettings,
) -> Result<DMatrix<f64>> {
    Ok(collect_left_training(problem, phi, parameters, settings, LeftTrainingOptions::default())?.s_r.matrix)
}
