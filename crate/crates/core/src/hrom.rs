//! Hyper-reduced solvers that assemble only over selected elements.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::ecm::EcmQuadrature;
use crate::error::{Error, Result};
use crate::fom::{newton, Evaluation, NewtonSettings};
use crate::rom::{solve_projected, RomState, RomStep, RomTrajectory};
use crate::linalg::solve_square;
use crate::testbed::{elemental_jacobian, elemental_residual, gather_rows, ElementPatch, FeProblem, Frame, Step};

#[derive(Debug, Clone, Copy)]
pub enum HyperProjection<'a> {
    Galerkin,
    PetrovGalerkin(&'a DMatrix<f64>),
    /// Least squares with the Jacobian-weighted residual; needs the
    /// complementary mesh (sorted) to assemble `R^{Le}`.
    Lspg { complementary: &'a [usize] },
}

#[derive(Debug, Clone, Copy)]
pub struct HromSolver<'a> {
    pub phi: &'a DMatrix<f64>,
    pub quadrature: &'a EcmQuadrature,
    pub projection: HyperProjection<'a>,
}

impl<'a> HromSolver<'a> {
    /// Validates shapes and, for LSPG, that every selected element's patch
    /// lies inside the complementary mesh.
    pub fn new(
        problem: &dyn FeProblem,
        phi: &'a DMatrix<f64>,
        quadrature: &'a EcmQuadrature,
        projection: HyperProjection<'a>,
        patches: &[ElementPatch],
    ) -> Result<Self> {
        let n_full = problem.assembly().free_dofs();
        let elements = problem.assembly().element_count();
        if phi.nrows() != n_full || phi.ncols() == 0 {
            return Err(Error::InvalidInput(format!("right basis is {}x{}", phi.nrows(), phi.ncols())));
        }
        if quadrature.z.len() != quadrature.omega.len() {
            return Err(Error::InvalidInput("quadrature ids and weights differ in length".into()));
        }
        if let Some(&e) = quadrature.z.iter().find(|&&e| e >= elements) {
            return Err(Error::InvalidInput(format!("quadrature element {e} out of range")));
        }
        match projection {
            HyperProjection::Galerkin => {}
            HyperProjection::PetrovGalerkin(psi) => {
                if psi.nrows() != n_full {
                    return Err(Error::InvalidInput(format!("left basis has {} rows", psi.nrows())));
                }
                if psi.ncols() < phi.ncols() {
                    return Err(Error::Configuration(format!(
                        "left basis has {} columns but the right basis has {}; need m >= n",
                        psi.ncols(),
                        phi.ncols()
                    )));
                }
            }
            HyperProjection::Lspg { complementary } => {
                if !complementary.windows(2).all(|w| w[0] < w[1]) {
                    return Err(Error::Configuration("complementary mesh must be sorted and duplicate-free".into()));
                }
                for &e in &quadrature.z {
                    let patch = patches
                        .get(e)
                        .ok_or_else(|| Error::Configuration(format!("no patch for element {e}")))?;
                    if let Some(missing) = patch.patch.iter().find(|o| complementary.binary_search(o).is_err()) {
                        return Err(Error::Configuration(format!(
                            "complementary mesh lacks element {missing} from the patch of selected element {e}"
                        )));
                    }
                }
            }
        }
        Ok(Self { phi, quadrature, projection })
    }

    pub fn elements_per_evaluation(&self) -> usize {
        match self.projection {
            HyperProjection::Lspg { complementary } => complementary.len(),
            _ => self.quadrature.len(),
        }
    }
}

/// Partial assembly of `R` over `complementary` (ascending), gathered at
/// each element of `z`. Equals the full-assembly gather when every patch of
/// `z` lies in `complementary`.
pub fn patch_assembled_gather(
    problem: &dyn FeProblem,
    complementary: &[usize],
    z: &[usize],
    u: &DVector<f64>,
    frame: &Frame,
) -> Result<Vec<Vec<f64>>> {
    let map = problem.assembly();
    let mut partial = vec![0.0; map.free_dofs()];
    for &e in complementary {
        let re = elemental_residual(problem, e, u, frame)?;
        map.scatter_add(e, re.as_slice(), &mut partial);
    }
    Ok(z.iter().map(|&e| map.gather(e, &partial)).collect())
}

struct Reduced {
    rhat: DVector<f64>,
    lhs: DMatrix<f64>,
    touched: usize,
}

fn evaluate_reduced(problem: &dyn FeProblem, solver: &HromSolver, u: &DVector<f64>, frame: &Frame) -> Result<Reduced> {
    let map = problem.assembly();
    let phi = solver.phi;
    let n = phi.ncols();
    let quad = solver.quadrature;
    match solver.projection {
        HyperProjection::Galerkin | HyperProjection::PetrovGalerkin(_) => {
            let psi = match solver.projection {
                HyperProjection::PetrovGalerkin(psi) => psi,
                _ => phi,
            };
            let m = psi.ncols();
            let mut rhat = DVector::zeros(m);
            let mut lhs = DMatrix::zeros(m, n);
            for (&e, &w) in quad.z.iter().zip(&quad.omega) {
                let re = elemental_residual(problem, e, u, frame)?;
                let je = elemental_jacobian(problem, e, u, frame)?;
                let psi_e = gather_rows(map, e, psi);
                let phi_e = gather_rows(map, e, phi);
                rhat += psi_e.tr_mul(&re) * w;
                lhs += psi_e.tr_mul(&(je * phi_e)) * w;
            }
            Ok(Reduced { rhat, lhs, touched: quad.len() })
        }
        HyperProjection::Lspg { complementary } => {
            let dofs = map.free_dofs();
            let mut r_partial = vec![0.0; dofs];
            let mut jphi_partial = DMatrix::zeros(dofs, n);
            let mut selected_blocks = Vec::with_capacity(quad.len());
            for &e in complementary {
                let re = elemental_residual(problem, e, u, frame)?;
                let je = elemental_jacobian(problem, e, u, frame)?;
                let block = je * gather_rows(map, e, phi);
                map.scatter_add(e, re.as_slice(), &mut r_partial);
                for (a, d) in map.dofs(e).iter().enumerate() {
                    if let Some(row) = d {
                        for k in 0..n {
                            jphi_partial[(*row, k)] += block[(a, k)];
                        }
                    }
                }
                if quad.z.binary_search(&e).is_ok() {
                    selected_blocks.push(block);
                }
            }
            let mut rhat = DVector::zeros(n);
            let mut lhs = DMatrix::zeros(n, n);
            for ((&e, &w), jphi_e) in quad.z.iter().zip(&quad.omega).zip(&selected_blocks) {
                let rle = DVector::from_vec(map.gather(e, &r_partial));
                let jphi_le = gather_rows(map, e, &jphi_partial);
                rhat += jphi_e.tr_mul(&rle) * w;
                lhs += jphi_e.tr_mul(&jphi_le) * w;
            }
            Ok(Reduced { rhat, lhs, touched: complementary.len() })
        }
    }
}

pub fn solve_timestep_hrom(
    problem: &dyn FeProblem,
    solver: &HromSolver,
    u_ref: &DVector<f64>,
    step: Step,
    mu: &[f64],
    settings: &NewtonSettings,
) -> Result<RomStep> {
    problem.validate_parameter(mu)?;
    if !solver.quadrature.z.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::InvalidInput("quadrature elements must be sorted and distinct".into()));
    }
    let frame = Frame { u_ref, step, mu };
    let phi = solver.phi;
    let outcome = newton(settings, phi.ncols(), |q| {
        let u = u_ref + phi * q;
        let red = evaluate_reduced(problem, solver, &u, &frame)?;
        let (direction, metric) = match solver.projection {
            HyperProjection::PetrovGalerkin(_) => solve_projected(&red.lhs, &red.rhat)?,
            _ => (solve_square(&red.lhs, &(-&red.rhat))?, red.rhat.norm()),
        };
        Ok(Evaluation::ready(metric, direction, red.rhat, red.touched))
    })?;
    let u_tilde = u_ref + phi * &outcome.increment;
    Ok(RomStep {
        state: RomState { q_hat: outcome.increment, u_tilde },
        trace: outcome.trace,
        residuals: outcome.residuals,
        directions: outcome.directions,
    })
}

#[allow(clippy::too_many_arguments)]
pub fn solve_timestep_hrom_galerkin(
    problem: &dyn FeProblem,
    phi: &DMatrix<f64>,
    quadrature: &EcmQuadrature,
    u_ref: &DVector<f64>,
    step: Step,
    mu: &[f64],
    settings: &NewtonSettings,
) -> Result<RomStep> {
    let solver = HromSolver::new(problem, phi, quadrature, HyperProjection::Galerkin, &[])?;
    solve_timestep_hrom(problem, &solver, u_ref, step, mu, settings)
}

#[allow(clippy::too_many_arguments)]
pub fn solve_timestep_hrom_pg(
    problem: &dyn FeProblem,
    phi: &DMatrix<f64>,
    psi: &DMatrix<f64>,
    quadrature: &EcmQuadrature,
    u_ref: &DVector<f64>,
    step: Step,
    mu: &[f64],
    settings: &NewtonSettings,
) -> Result<RomStep> {
    let solver = HromSolver::new(problem, phi, quadrature, HyperProjection::PetrovGalerkin(psi), &[])?;
    solve_timestep_hrom(problem, &solver, u_ref, step, mu, settings)
}

#[allow(clippy::too_many_arguments)]
pub fn solve_timestep_hrom_lspg(
    problem: &dyn FeProblem,
    phi: &DMatrix<f64>,
    quadrature: &EcmQuadrature,
    complementary: &[usize],
    patches: &[ElementPatch],
    u_ref: &DVector<f64>,
    step: Step,
    mu: &[f64],
    settings: &NewtonSettings,
) -> Result<RomStep> {
    let solver = HromSolver::new(problem, phi, quadrature, HyperProjection::Lspg { complementary }, patches)?;
    solve_timestep_hrom(problem, &solver, u_ref, step, mu, settings)
}

pub fn run_hrom_trajectory(
    problem: &dyn FeProblem,
    solver: &HromSolver,
    mu: &[f64],
    settings: &NewtonSettings,
) -> Result<RomTrajectory> {
    let mut u_ref = problem.initial_state(mu);
    let mut steps = Vec::with_capacity(problem.steps().len());
    for step in problem.steps() {
        let out = solve_timestep_hrom(problem, solver, &u_ref, *step, mu, settings)
            .map_err(|e| e.context(format!("HROM at mu = {mu:?}, t = {}", step.time)))?;
        u_ref = out.state.u_tilde.clone();
        steps.push(out);
    }
    Ok(RomTrajectory { steps })
}

pub fn run_hrom_campaign(
    problem: &dyn FeProblem,
    solver: &HromSolver,
    parameters: &[Vec<f64>],
    settings: &NewtonSettings,
) -> Result<Vec<RomTrajectory>> {
    parameters
        .par_iter()
        .map(|mu| run_hrom_trajectory(problem, solver, mu, settings))
        .collect()
}
