//! Finite-element problem abstraction and the bundled parametric problems.

mod bar;
mod convdiff;
mod mesh;
mod toy;

pub use bar::{load_scaling, BarSpec, SaintVenantBar};
pub use convdiff::{source_term_pulse, Material, PulseSpec, RotatingPulse, DIFFUSIVITY_SCALE};
pub use mesh::{element_patches, AssemblyMap, ElementPatch, Mesh};
pub use toy::QuadraticToy;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One entry of the time (or load-step) grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub index: usize,
    pub time: f64,
    pub dt: f64,
}

/// Uniform grid `t_i = i * dt` for `i = 1..=count`.
pub fn uniform_steps(count: usize, dt: f64) -> Vec<Step> {
    (1..=count)
        .map(|i| Step {
            index: i - 1,
            time: i as f64 * dt,
            dt,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Symmetry {
    Symmetric,
    General,
}

/// Elemental residuals and Jacobians of a parametric finite-element model.
///
/// Local vectors are ordered like the element's node list and carry zeros
/// at constrained DOFs. Global vectors hold free DOFs only.
pub trait FeProblem: Send + Sync {
    fn name(&self) -> &str;
    fn mesh(&self) -> &Mesh;
    fn assembly(&self) -> &AssemblyMap;
    fn symmetry(&self) -> Symmetry;
    fn steps(&self) -> &[Step];
    fn parameter_dim(&self) -> usize;

    fn validate_parameter(&self, mu: &[f64]) -> Result<()> {
        if mu.len() != self.parameter_dim() || !mu.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "{} expects {} finite parameter(s), got {mu:?}",
                self.name(),
                self.parameter_dim()
            )));
        }
        Ok(())
    }

    fn initial_state(&self, _mu: &[f64]) -> DVector<f64> {
        DVector::zeros(self.assembly().free_dofs())
    }

    fn element_residual(
        &self,
        e: usize,
        u: &[f64],
        u_ref: &[f64],
        step: &Step,
        mu: &[f64],
    ) -> Result<DVector<f64>>;

    fn element_jacobian(
        &self,
        e: usize,
        u: &[f64],
        u_ref: &[f64],
        step: &Step,
        mu: &[f64],
    ) -> Result<DMatrix<f64>>;
}

/// The fixed data of one timestep solve: reference state, step and parameter.
#[derive(Debug, Clone, Copy)]
pub struct Frame<'a> {
    pub u_ref: &'a DVector<f64>,
    pub step: Step,
    pub mu: &'a [f64],
}

pub fn gather_dofs(assembly: &AssemblyMap, e: usize, v: &DVector<f64>) -> Vec<f64> {
    assembly.gather(e, v.as_slice())
}

/// `R^e` for a global state.
pub fn elemental_residual(
    problem: &dyn FeProblem,
    e: usize,
    u: &DVector<f64>,
    frame: &Frame,
) -> Result<DVector<f64>> {
    let map = problem.assembly();
    check_element(problem, e)?;
    problem.element_residual(
        e,
        &map.gather(e, u.as_slice()),
        &map.gather(e, frame.u_ref.as_slice()),
        &frame.step,
        frame.mu,
    )
}

/// `J^e` for a global state.
pub fn elemental_jacobian(
    problem: &dyn FeProblem,
    e: usize,
    u: &DVector<f64>,
    frame: &Frame,
) -> Result<DMatrix<f64>> {
    let map = problem.assembly();
    check_element(problem, e)?;
    problem.element_jacobian(
        e,
        &map.gather(e, u.as_slice()),
        &map.gather(e, frame.u_ref.as_slice()),
        &frame.step,
        frame.mu,
    )
}

fn check_element(problem: &dyn FeProblem, e: usize) -> Result<()> {
    if e >= problem.assembly().element_count() {
        return Err(Error::InvalidInput(format!(
            "element {e} out of range for {}",
            problem.name()
        )));
    }
    Ok(())
}

/// `sum_e L^{eT} R^e` over the given elements, in the order given.
pub fn assemble_residual_over(
    problem: &dyn FeProblem,
    elements: &[usize],
    u: &DVector<f64>,
    frame: &Frame,
) -> Result<DVector<f64>> {
    let map = problem.assembly();
    let mut out = DVector::zeros(map.free_dofs());
    for &e in elements {
        let re = elemental_residual(problem, e, u, frame)?;
        map.scatter_add(e, re.as_slice(), out.as_mut_slice());
    }
    Ok(out)
}

/// Full residual, elements visited in ascending order.
pub fn assemble_residual(
    problem: &dyn FeProblem,
    u: &DVector<f64>,
    frame: &Frame,
) -> Result<DVector<f64>> {
    let all: Vec<usize> = (0..problem.assembly().element_count()).collect();
    assemble_residual_over(problem, &all, u, frame)
}

/// Dense global Jacobian on the free DOFs.
pub fn assemble_jacobian(
    problem: &dyn FeProblem,
    u: &DVector<f64>,
    frame: &Frame,
) -> Result<DMatrix<f64>> {
    let map = problem.assembly();
    let n = map.free_dofs();
    let mut j = DMatrix::zeros(n, n);
    for e in 0..map.element_count() {
        let je = elemental_jacobian(problem, e, u, frame)?;
        let dofs = map.dofs(e);
        for (b, db) in dofs.iter().enumerate() {
            let Some(col) = db else { continue };
            for (a, da) in dofs.iter().enumerate() {
                if let Some(row) = da {
                    j[(*row, *col)] += je[(a, b)];
                }
            }
        }
    }
    Ok(j)
}

/// Rows of `basis` at element `e`'s DOFs (`Phi^e = L^e Phi`), zero where constrained.
pub fn gather_rows(map: &AssemblyMap, e: usize, basis: &DMatrix<f64>) -> DMatrix<f64> {
    let dofs = map.dofs(e);
    DMatrix::from_fn(dofs.len(), basis.ncols(), |a, k| {
        dofs[a].map_or(0.0, |i| basis[(i, k)])
    })
}

/// `J Phi` assembled element by element without forming `J`.
pub fn jacobian_times(
    problem: &dyn FeProblem,
    u: &DVector<f64>,
    frame: &Frame,
    basis: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let map = problem.assembly();
    let mut out = DMatrix::zeros(map.free_dofs(), basis.ncols());
    for e in 0..map.element_count() {
        let je = elemental_jacobian(problem, e, u, frame)?;
        let block = je * gather_rows(map, e, basis);
        for (a, d) in map.dofs(e).iter().enumerate() {
            if let Some(row) = d {
                for k in 0..basis.ncols() {
                    out[(*row, k)] += block[(a, k)];
                }
            }
        }
    }
    Ok(out)
}
