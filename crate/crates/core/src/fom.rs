//! Newton-Raphson time marching for the full-order model and snapshot campaigns.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::solve_square;
use crate::testbed::{assemble_jacobian, assemble_residual, FeProblem, Frame, Step};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NewtonSettings {
    pub max_iterations: usize,
    pub rel_tolerance: f64,
    pub abs_tolerance: f64,
    /// Initial step length in (0, 1].
    pub step_length: f64,
    /// Halve the step (at most 8 times) until the convergence metric decreases.
    pub line_search: bool,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        Self {
            max_iterations: 25,
            rel_tolerance: 1e-9,
            abs_tolerance: 1e-12,
            step_length: 1.0,
            line_search: false,
        }
    }
}

impl NewtonSettings {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::Configuration("max_iterations must be at least 1".into()));
        }
        if !(self.rel_tolerance > 0.0) || !(self.abs_tolerance > 0.0) {
            return Err(Error::Configuration("newton tolerances must be positive".into()));
        }
        if !(self.step_length > 0.0 && self.step_length <= 1.0) {
            return Err(Error::Configuration(format!(
                "step length {} outside (0, 1]",
                self.step_length
            )));
        }
        Ok(())
    }
}

/// Convergence history of one timestep solve.
///
/// `residual_norms[k]` is the solver's convergence metric at iterate `k`
/// (iterate 0 is the reference state); `step_norms[k]` is the norm of the
/// increment that produced iterate `k + 1`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub residual_norms: Vec<f64>,
    pub step_norms: Vec<f64>,
    /// Elemental evaluations per residual/Jacobian evaluation.
    pub elements_touched: Vec<usize>,
    pub wall_time_s: f64,
}

impl IterationTrace {
    /// Number of corrective Newton steps taken.
    pub fn iterations(&self) -> usize {
        self.step_norms.len()
    }

    pub fn last_residual(&self) -> f64 {
        self.residual_norms.last().copied().unwrap_or(f64::NAN)
    }
}

type DirectionFn<'a> = Box<dyn FnOnce() -> Result<DVector<f64>> + 'a>;

/// What a solver reports at one iterate of the shared Newton driver.
pub(crate) struct Evaluation<'a> {
    pub metric: f64,
    /// Search direction; only called when the iterate is not converged.
    pub direction: DirectionFn<'a>,
    pub residual: DVector<f64>,
    pub touched: usize,
}

impl<'a> Evaluation<'a> {
    pub fn ready(metric: f64, direction: DVector<f64>, residual: DVector<f64>, touched: usize) -> Self {
        Self { metric, direction: Box::new(move || Ok(direction)), residual, touched }
    }
}

pub(crate) struct NewtonOutcome {
    pub increment: DVector<f64>,
    pub trace: IterationTrace,
    /// Residual payload at every accepted iterate; the last one is converged.
    pub residuals: Vec<DVector<f64>>,
    /// Search direction taken from every non-final iterate.
    pub directions: Vec<DVector<f64>>,
}

/// Newton loop shared by full, reduced and hyper-reduced solvers.
///
/// `evaluate` maps the current increment to the convergence metric, the
/// search direction and a residual payload.
pub(crate) fn newton<'a, F>(settings: &NewtonSettings, dim: usize, mut evaluate: F) -> Result<NewtonOutcome>
where
    F: FnMut(&DVector<f64>) -> Result<Evaluation<'a>>,
{
    settings.validate()?;
    let start = Instant::now();
    let mut trace = IterationTrace::default();
    let mut residuals = Vec::new();
    let mut directions = Vec::new();
    let mut q = DVector::zeros(dim);
    let mut ev = evaluate(&q)?;
    let tol = settings.rel_tolerance * ev.metric + settings.abs_tolerance;

    loop {
        trace.residual_norms.push(ev.metric);
        trace.elements_touched.push(ev.touched);
        if !ev.metric.is_finite() {
            trace.wall_time_s = start.elapsed().as_secs_f64();
            return Err(Error::Divergence { trace: Box::new(trace) });
        }
        if ev.metric <= tol {
            residuals.push(ev.residual);
            break;
        }
        if trace.iterations() >= settings.max_iterations {
            trace.wall_time_s = start.elapsed().as_secs_f64();
            return Err(Error::Divergence { trace: Box::new(trace) });
        }
        let direction = (ev.direction)()?;
        if direction.iter().any(|v| !v.is_finite()) {
            trace.wall_time_s = start.elapsed().as_secs_f64();
            return Err(Error::Divergence { trace: Box::new(trace) });
        }
        let mut alpha = settings.step_length;
        let mut next_q = &q + &direction * alpha;
        let mut next = evaluate(&next_q)?;
        if settings.line_search {
            let mut halvings = 0;
            while !(next.metric < ev.metric) && halvings < 8 {
                alpha *= 0.5;
                halvings += 1;
                next_q = &q + &direction * alpha;
                next = evaluate(&next_q)?;
            }
        }
        trace.step_norms.push(alpha * direction.norm());
        residuals.push(ev.residual);
        directions.push(direction);
        q = next_q;
        ev = next;
    }
    trace.wall_time_s = start.elapsed().as_secs_f64();
    Ok(NewtonOutcome {
        increment: q,
        trace,
        residuals,
        directions,
    })
}

#[derive(Debug, Clone)]
pub struct FomStep {
    pub u: DVector<f64>,
    pub delta_u: DVector<f64>,
    pub trace: IterationTrace,
    /// Residual at every accepted iterate; the last one is converged.
    pub residuals: Vec<DVector<f64>>,
}

/// Newton-Raphson solve of `R(u) = 0` for one timestep, starting from `u_ref`.
pub fn solve_timestep_fom(
    problem: &dyn FeProblem,
    u_ref: &DVector<f64>,
    step: Step,
    mu: &[f64],
    settings: &NewtonSettings,
) -> Result<FomStep> {
    problem.validate_parameter(mu)?;
    let frame = Frame { u_ref, step, mu };
    let elements = problem.assembly().element_count();
    let frame = &frame;
    let outcome = newton(settings, u_ref.len(), |du| {
        let u = u_ref + du;
        let residual = assemble_residual(problem, &u, frame)?;
        let rhs = -&residual;
        Ok(Evaluation {
            metric: residual.norm(),
            direction: Box::new(move || solve_square(&assemble_jacobian(problem, &u, frame)?, &rhs)),
            residual,
            touched: elements,
        })
    })?;
    Ok(FomStep {
        u: u_ref + &outcome.increment,
        delta_u: outcome.increment,
        trace: outcome.trace,
        residuals: outcome.residuals,
    })
}

/// Origin of one snapshot column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub parameter: usize,
    pub timestep: usize,
    pub iteration: usize,
}

/// Column-stacked snapshots with per-column provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    pub matrix: DMatrix<f64>,
    pub provenance: Vec<Provenance>,
}

impl SnapshotSet {
    pub fn from_columns(rows: usize, columns: Vec<(DVector<f64>, Provenance)>) -> Self {
        let mut matrix = DMatrix::zeros(rows, columns.len());
        let mut provenance = Vec::with_capacity(columns.len());
        for (j, (c, p)) in columns.into_iter().enumerate() {
            matrix.set_column(j, &c);
            provenance.push(p);
        }
        Self { matrix, provenance }
    }

    pub fn len(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.ncols() == 0
    }
}

/// Time history of one parameter instance.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<DVector<f64>>,
    pub traces: Vec<IterationTrace>,
}

#[derive(Debug, Clone)]
pub struct FomCampaign {
    /// `A^u`: total states, timestep-major within parameter-major.
    pub snapshots: SnapshotSet,
    pub trajectories: Vec<Trajectory>,
}

pub fn run_fom_trajectory(
    problem: &dyn FeProblem,
    mu: &[f64],
    settings: &NewtonSettings,
) -> Result<Trajectory> {
    let mut u_ref = problem.initial_state(mu);
    let mut states = Vec::with_capacity(problem.steps().len());
    let mut traces = Vec::with_capacity(problem.steps().len());
    for step in problem.steps() {
        let out = solve_timestep_fom(problem, &u_ref, *step, mu, settings)
            .map_err(|e| e.context(format!("FOM at mu = {mu:?}, t = {}", step.time)))?;
        u_ref = out.u.clone();
        states.push(out.u);
        traces.push(out.trace);
    }
    Ok(Trajectory { states, traces })
}

/// Solves every parameter's time history (parameters in parallel) and
/// stacks the states into `A^u`.
pub fn run_fom_campaign(
    problem: &dyn FeProblem,
    parameters: &[Vec<f64>],
    settings: &NewtonSettings,
) -> Result<FomCampaign> {
    if parameters.is_empty() {
        return Err(Error::InvalidInput("FOM campaign without parameters".into()));
    }
    let trajectories: Vec<Trajectory> = parameters
        .par_iter()
        .map(|mu| run_fom_trajectory(problem, mu, settings))
        .collect::<Result<_>>()?;
    let snapshots = stack_trajectories(problem.assembly().free_dofs(), &trajectories);
    Ok(FomCampaign { snapshots, trajectories })
}

/// Stacks trajectory states column-wise, timestep-major within parameter-major.
pub fn stack_trajectories(rows: usize, trajectories: &[Trajectory]) -> SnapshotSet {
    let columns = trajectories
        .iter()
        .enumerate()
        .flat_map(|(j, traj)| {
            traj.states.iter().zip(&traj.traces).enumerate().map(move |(i, (u, t))| {
                (
                    u.clone(),
                    Provenance {
                        parameter: j,
                        timestep: i,
                        iteration: t.iterations(),
                    },
                )
            })
        })
        .collect();
    SnapshotSet::from_columns(rows, columns)
}
