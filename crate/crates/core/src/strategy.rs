//! Offline training and online evaluation for each projection strategy.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::basis::{build_left_basis_jacobian, build_left_basis_residual, LeftTraining};
use crate::ecm::{
    build_complementary_mesh, build_ecm_training_matrix, quadrature_exactness, train_quadrature, training_states,
    EcmQuadrature, Integrand,
};
use crate::error::{Error, Result};
use crate::fom::NewtonSettings;
use crate::hrom::{HromSolver, HyperProjection};
use crate::rom::{run_rom_campaign, RomSolver, RomTrajectory};
use crate::testbed::{ElementPatch, FeProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Galerkin,
    Lspg,
    PgJacobian,
    PgResidual,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::Galerkin, Strategy::Lspg, Strategy::PgJacobian, Strategy::PgResidual];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Galerkin => "galerkin",
            Strategy::Lspg => "lspg",
            Strategy::PgJacobian => "pg-jacobian",
            Strategy::PgResidual => "pg-residual",
        }
    }

    pub fn needs_left_basis(self) -> bool {
        matches!(self, Strategy::PgJacobian | Strategy::PgResidual)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            let valid: Vec<&str> = Strategy::ALL.iter().map(|k| k.name()).collect();
            Error::Configuration(format!("unknown strategy {s:?}; valid names: {}", valid.join(", ")))
        })
    }
}

/// Truncation and fit tolerances for the offline stages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub eps_u: f64,
    pub eps_psi_j: f64,
    pub eps_r: f64,
    pub eps_ecm: f64,
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("eps_u", self.eps_u), ("eps_psi_j", self.eps_psi_j), ("eps_r", self.eps_r), ("eps_ecm", self.eps_ecm)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Configuration(format!("tolerance {name} = {v} is outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Both invariant left bases, or only those requested.
#[derive(Debug, Clone, Default)]
pub struct LeftBases {
    pub psi_j: Option<DMatrix<f64>>,
    pub psi_r: Option<DMatrix<f64>>,
}

impl LeftBases {
    pub fn from_training(training: &LeftTraining, tol: &Tolerances, strategies: &[Strategy]) -> Result<Self> {
        let mut out = LeftBases::default();
        if strategies.contains(&Strategy::PgJacobian) {
            out.psi_j = Some(build_left_basis_jacobian(&training.s_j.matrix, tol.eps_psi_j)?.matrix);
        }
        if strategies.contains(&Strategy::PgResidual) {
            if training.s_r.is_empty() {
                return Err(Error::EmptySnapshots.context("residual left basis"));
            }
            out.psi_r = Some(build_left_basis_residual(&training.s_r.matrix, tol.eps_r)?.matrix);
        }
        Ok(out)
    }

    pub fn for_strategy(&self, strategy: Strategy) -> Result<Option<&DMatrix<f64>>> {
        let missing = |what: &str| Error::Configuration(format!("strategy {strategy} needs {what}, which was not trained"));
        Ok(match strategy {
            Strategy::Galerkin | Strategy::Lspg => None,
            Strategy::PgJacobian => Some(self.psi_j.as_ref().ok_or_else(|| missing("the Jacobian left basis"))?),
            Strategy::PgResidual => Some(self.psi_r.as_ref().ok_or_else(|| missing("the residual left basis"))?),
        })
    }
}

/// Reduced solver for `strategy`; `psi` is required by the PG strategies.
pub fn rom_solver<'a>(strategy: Strategy, phi: &'a DMatrix<f64>, psi: Option<&'a DMatrix<f64>>) -> Result<RomSolver<'a>> {
    Ok(match (strategy, psi) {
        (Strategy::Galerkin, _) => RomSolver::galerkin(phi),
        (Strategy::Lspg, _) => RomSolver::lspg(phi),
        (_, Some(psi)) => RomSolver::petrov_galerkin(phi, psi),
        (_, None) => return Err(Error::Configuration(format!("strategy {strategy} needs a left basis"))),
    })
}

/// Hyper-reduction data for one strategy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HyperReducedOperatorSet {
    pub strategy: Strategy,
    pub quadrature: EcmQuadrature,
    /// Union of the patches of the selected elements (least squares only).
    pub complementary: Option<Vec<usize>>,
    /// Per training state relative quadrature error.
    pub training_exactness: Vec<f64>,
}

impl HyperReducedOperatorSet {
    /// Elements evaluated per Newton iteration online.
    pub fn elements_per_iteration(&self) -> usize {
        self.complementary.as_ref().map_or(self.quadrature.len(), Vec::len)
    }

    pub fn solver<'a>(
        &'a self,
        problem: &dyn FeProblem,
        phi: &'a DMatrix<f64>,
        psi: Option<&'a DMatrix<f64>>,
        patches: &[ElementPatch],
    ) -> Result<HromSolver<'a>> {
        let projection = match (self.strategy, psi) {
            (Strategy::Galerkin, _) => HyperProjection::Galerkin,
            (Strategy::Lspg, _) => HyperProjection::Lspg {
                complementary: self
                    .complementary
                    .as_deref()
                    .ok_or_else(|| Error::Configuration("least-squares hyper-reduction without a complementary mesh".into()))?,
            },
            (_, Some(psi)) => HyperProjection::PetrovGalerkin(psi),
            (s, None) => return Err(Error::Configuration(format!("strategy {s} needs a left basis"))),
        };
        HromSolver::new(problem, phi, &self.quadrature, projection, patches)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CubatureOptions {
    /// Relative fit and compression tolerance; 0 means machine precision.
    pub eps_ecm: f64,
    /// Also train on the Newton iterates preceding each converged state.
    /// Converged states alone make the Galerkin target vanish.
    pub include_iterates: bool,
}

impl Default for CubatureOptions {
    fn default() -> Self {
        Self { eps_ecm: 0.0, include_iterates: true }
    }
}

/// Trains the cubature on the states of the strategy's own reduced
/// trajectories over `parameters`.
///
/// Pass `trajectories` to reuse an existing campaign; otherwise the reduced
/// model is run here.
#[allow(clippy::too_many_arguments)]
pub fn train_hyperreduction(
    problem: &dyn FeProblem,
    strategy: Strategy,
    phi: &DMatrix<f64>,
    psi: Option<&DMatrix<f64>>,
    parameters: &[Vec<f64>],
    trajectories: Option<&[RomTrajectory]>,
    settings: &NewtonSettings,
    options: CubatureOptions,
    patches: &[ElementPatch],
) -> Result<HyperReducedOperatorSet> {
    let owned;
    let trajectories = match trajectories {
        Some(t) => t,
        None => {
            let solver = rom_solver(strategy, phi, psi)?;
            owned = run_rom_campaign(problem, &solver, parameters, settings)?;
            &owned
        }
    };
    let states = training_states(problem, parameters, trajectories, phi, options.include_iterates)?;
    let integrand = match (strategy, psi) {
        (Strategy::Galerkin, _) => Integrand::Projected(phi),
        (Strategy::Lspg, _) => Integrand::JacobianWeighted(phi),
        (_, Some(psi)) => Integrand::Projected(psi),
        (s, None) => return Err(Error::Configuration(format!("strategy {s} needs a left basis"))),
    };
    let training = build_ecm_training_matrix(problem, integrand, &states)?;
    let quadrature = train_quadrature(&training, options.eps_ecm)?;
    let training_exactness = quadrature_exactness(&training, &quadrature);
    let complementary = match strategy {
        Strategy::Lspg => Some(build_complementary_mesh(&quadrature.z, patches)?),
        _ => None,
    };
    Ok(HyperReducedOperatorSet { strategy, quadrature, complementary, training_exactness })
}
