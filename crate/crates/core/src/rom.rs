//! Online projection-based reduced solvers: Galerkin, LSPG and Petrov-Galerkin
//! with a fixed left basis.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fom::{newton, Evaluation, IterationTrace, NewtonSettings, Trajectory};
use crate::linalg::{qr_least_squares, solve_square};
use crate::testbed::{assemble_residual, jacobian_times, FeProblem, Frame, Step};

/// Reduced coordinates and the reconstructed full state `u_ref + Phi q`.
#[derive(Debug, Clone, PartialEq)]
pub struct RomState {
    pub q_hat: DVector<f64>,
    pub u_tilde: DVector<f64>,
}

/// Which left basis the reduced residual is projected onto.
#[derive(Debug, Clone, Copy)]
pub enum Projection<'a> {
    /// `Psi = Phi`.
    Galerkin,
    /// `Psi = J Phi`, rebuilt every iteration.
    Lspg,
    /// A fixed left basis with `m >= n` columns.
    PetrovGalerkin(&'a DMatrix<f64>),
}

#[derive(Debug, Clone, Copy)]
pub struct RomSolver<'a> {
    pub phi: &'a DMatrix<f64>,
    pub projection: Projection<'a>,
    /// Solve the LSPG step by QR on `J Phi` instead of the normal equations.
    pub lspg_qr: bool,
}

impl<'a> RomSolver<'a> {
    pub fn galerkin(phi: &'a DMatrix<f64>) -> Self {
        Self { phi, projection: Projection::Galerkin, lspg_qr: false }
    }

    pub fn lspg(phi: &'a DMatrix<f64>) -> Self {
        Self { phi, projection: Projection::Lspg, lspg_qr: false }
    }

    pub fn petrov_galerkin(phi: &'a DMatrix<f64>, psi: &'a DMatrix<f64>) -> Self {
        Self { phi, projection: Projection::PetrovGalerkin(psi), lspg_qr: false }
    }

    fn check(&self, problem: &dyn FeProblem) -> Result<()> {
        let n_full = problem.assembly().free_dofs();
        let n = self.phi.ncols();
        if self.phi.nrows() != n_full || n == 0 {
            return Err(Error::InvalidInput(format!(
                "right basis is {}x{n}, expected {n_full} rows and at least one column",
                self.phi.nrows()
            )));
        }
        if let Projection::PetrovGalerkin(psi) = self.projection {
            if psi.nrows() != n_full {
                return Err(Error::InvalidInput(format!(
                    "left basis has {} rows, expected {n_full}",
                    psi.nrows()
                )));
            }
            if psi.ncols() < n {
                return Err(Error::Configuration(format!(
                    "left basis has {} columns but the right basis has {n}; need m >= n",
                    psi.ncols()
                )));
            }
        }
        Ok(())
    }

    /// Search direction and convergence metric at a
    /// full state with known residual `r` and `J Phi`.
    pub fn search_direction(&self, r: &DVector<f64>, jphi: &DMatrix<f64>) -> Result<(DVector<f64>, f64)> {
        reduced_step(self.phi, self.projection, self.lspg_qr, r, jphi)
    }
}

/// Linearized reduced system shared by the ROM and HROM evaluators.
///
/// Galerkin: `Phi^T J Phi p = -Phi^T R`, metric `||Phi^T R||`.
/// LSPG: `(J Phi)^T (J Phi) p = -(J Phi)^T R`, metric `||(J Phi)^T R||`.
/// PG: `W = Psi^T J Phi`; square solve if `m = n` (metric `||Psi^T R||`),
/// QR least squares otherwise (metric `||W^T Psi^T R||`).
pub(crate) fn reduced_step(
    phi: &DMatrix<f64>,
    projection: Projection,
    lspg_qr: bool,
    r: &DVector<f64>,
    jphi: &DMatrix<f64>,
) -> Result<(DVector<f64>, f64)> {
    match projection {
        Projection::Galerkin => {
            let rhat = phi.tr_mul(r);
            let jhat = phi.tr_mul(jphi);
            Ok((solve_square(&jhat, &(-&rhat))?, rhat.norm()))
        }
        Projection::Lspg => {
            let g = jphi.tr_mul(r);
            let p = if lspg_qr {
                qr_least_squares(jphi, &(-r))?
            } else {
                solve_square(&jphi.tr_mul(jphi), &(-&g))?
            };
            Ok((p, g.norm()))
        }
        Projection::PetrovGalerkin(psi) => {
            let rhat = psi.tr_mul(r);
            let w = psi.tr_mul(jphi);
            solve_projected(&w, &rhat)
        }
    }
}

/// Direction and metric for a projected system `W p = -r_hat`.
pub(crate) fn solve_projected(w: &DMatrix<f64>, rhat: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
    if w.nrows() == w.ncols() {
        Ok((solve_square(w, &(-rhat))?, rhat.norm()))
    } else {
        let p = qr_least_squares(w, &(-rhat))?;
        Ok((p, w.tr_mul(rhat).norm()))
    }
}

#[derive(Debug, Clone)]
pub struct RomStep {
    pub state: RomState,
    pub trace: IterationTrace,
    /// Full residual at every accepted iterate; the last one is converged.
    pub residuals: Vec<DVector<f64>>,
    /// Reduced search direction taken at every non-final iterate.
    pub directions: Vec<DVector<f64>>,
}

impl RomStep {
    pub fn converged_residual(&self) -> &DVector<f64> {
        self.residuals.last().expect("a converged solve records its final residual")
    }

    pub fn nonconverged_residuals(&self) -> &[DVector<f64>] {
        &self.residuals[..self.residuals.len() - 1]
    }
}

pub fn solve_timestep_rom(
    problem: &dyn FeProblem,
    solver: &RomSolver,
    u_ref: &DVector<f64>,
    step: Step,
    mu: &[f64],
    settings: &NewtonSettings,
) -> Result<RomStep> {
    problem.validate_parameter(mu)?;
    solver.check(problem)?;
    let frame = Frame { u_ref, step, mu };
    let elements = problem.assembly().element_count();
    let phi = solver.phi;
    let outcome = newton(settings, phi.ncols(), |q| {
        let u = u_ref + phi * q;
        let residual = assemble_residual(problem, &u, &frame)?;
        let jphi = jacobian_times(problem, &u, &frame, phi)?;
        let (direction, metric) = solver.search_direction(&residual, &jphi)?;
        Ok(Evaluation::ready(metric, direction, residual, elements))
    })?;
    let u_tilde = u_ref + phi * &outcome.increment;
    Ok(RomStep {
        state: RomState { q_hat: outcome.increment, u_tilde },
        trace: outcome.trace,
        residuals: outcome.residuals,
        directions: outcome.directions,
    })
}

pub fn solve_timestep_galerkin(
    problem: &dyn FeProblem,
    phi: &DMatrix<f64>,
    u_ref: &DVector<f64>,
    step: Step,
    mu: &[f64],
    settings: &NewtonSettings,
) -> Result<RomStep> {
    solve_timestep_rom(problem, &RomSolver::galerkin(phi), u_ref, step, mu, settings)
}

pub fn solve_timestep_lspg(
    problem: &dyn FeProblem,
    phi: &DMatrix<f64>,
    u_ref: &DVector<f64>,
    step: Step,
    mu: &[f64],
    settings: &NewtonSettings,
) -> Result<RomStep> {
    solve_timestep_rom(problem, &RomSolver::lspg(phi), u_ref, step, mu, settings)
}

pub fn solve_timestep_pg(
    problem: &dyn FeProblem,
    phi: &DMatrix<f64>,
    psi: &DMatrix<f64>,
    u_ref: &DVector<f64>,
    step: Step,
    mu: &[f64],
    settings: &NewtonSettings,
) -> Result<RomStep> {
    solve_timestep_rom(problem, &RomSolver::petrov_galerkin(phi, psi), u_ref, step, mu, settings)
}

/// A reduced time history with the per-step solver records.
#[derive(Debug, Clone)]
pub struct RomTrajectory {
    pub steps: Vec<RomStep>,
}

impl RomTrajectory {
    pub fn states(&self) -> impl Iterator<Item = &DVector<f64>> {
        self.steps.iter().map(|s| &s.state.u_tilde)
    }

    pub fn to_trajectory(&self) -> Trajectory {
        Trajectory {
            states: self.states().cloned().collect(),
            traces: self.steps.iter().map(|s| s.trace.clone()).collect(),
        }
    }
}

pub fn run_rom_trajectory(
    problem: &dyn FeProblem,
    solver: &RomSolver,
    mu: &[f64],
    settings: &NewtonSettings,
) -> Result<RomTrajectory> {
    let mut u_ref = problem.initial_state(mu);
    let mut steps = Vec::with_capacity(problem.steps().len());
    for step in problem.steps() {
        let out = solve_timestep_rom(problem, solver, &u_ref, *step, mu, settings)
            .map_err(|e| e.context(format!("ROM at mu = {mu:?}, t = {}", step.time)))?;
        u_ref = out.state.u_tilde.clone();
        steps.push(out);
    }
    Ok(RomTrajectory { steps })
}

/// One trajectory per parameter, solved in parallel, returned in input order.
pub fn run_rom_campaign(
    problem: &dyn FeProblem,
    solver: &RomSolver,
    parameters: &[Vec<f64>],
    settings: &NewtonSettings,
) -> Result<Vec<RomTrajectory>> {
    parameters
        .par_iter()
        .map(|mu| run_rom_trajectory(problem, solver, mu, settings))
        .collect()
}
