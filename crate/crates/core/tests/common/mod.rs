#![allow(dead_code)]

use nalgebra::DMatrix;
use pgrom::basis::{build_right_basis, collect_left_training, LeftTraining, LeftTrainingOptions};
use pgrom::fom::{run_fom_campaign, stack_trajectories, FomCampaign, NewtonSettings};
use pgrom::rom::RomTrajectory;
use pgrom::strategy::{LeftBases, Strategy, Tolerances};
use pgrom::testbed::{BarSpec, FeProblem, Material, PulseSpec, RotatingPulse, SaintVenantBar};

pub fn bar() -> SaintVenantBar {
    SaintVenantBar::new(BarSpec::default()).unwrap()
}

pub fn small_bar(elements: usize) -> SaintVenantBar {
    SaintVenantBar::new(BarSpec { elements, ..BarSpec::default() }).unwrap()
}

/// Five load parameters spread over [0.1, 2.0].
pub fn bar_training() -> Vec<Vec<f64>> {
    (0..5).map(|i| vec![0.1 + 0.475 * i as f64]).collect()
}

/// Four load parameters in (2.0, 4.0].
pub fn bar_testing() -> Vec<Vec<f64>> {
    (1..=4).map(|i| vec![2.0 + 0.5 * i as f64]).collect()
}

pub fn bar_settings() -> NewtonSettings {
    NewtonSettings { rel_tolerance: 1e-12, abs_tolerance: 1e-30, ..NewtonSettings::default() }
}

pub fn bar_tolerances() -> Tolerances {
    Tolerances { eps_u: 1e-6, eps_psi_j: 1e-6, eps_r: 1e-6, eps_ecm: 0.0 }
}

pub fn pulse(cells: usize) -> RotatingPulse {
    RotatingPulse::new(PulseSpec { cells, ..PulseSpec::default() }).unwrap()
}

pub fn pulse_training() -> Vec<Vec<f64>> {
    vec![
        vec![Material::ethylene_glycol().diffusion_coefficient()],
        vec![Material::sae30_oil().diffusion_coefficient()],
    ]
}

pub fn pulse_testing() -> Vec<Vec<f64>> {
    vec![vec![Material::glycerol().diffusion_coefficient()]]
}

pub fn pulse_tolerances() -> Tolerances {
    Tolerances { eps_u: 1e-3, eps_psi_j: 1e-3, eps_r: 1e-3, eps_ecm: 1e-6 }
}

pub fn stack(problem: &dyn FeProblem, trajectories: &[RomTrajectory]) -> DMatrix<f64> {
    let full: Vec<_> = trajectories.iter().map(|t| t.to_trajectory()).collect();
    stack_trajectories(problem.assembly().free_dofs(), &full).matrix
}

/// First and second training stages for one campaign.
pub struct Offline {
    pub fom: FomCampaign,
    pub phi: DMatrix<f64>,
    pub training: LeftTraining,
    pub left: LeftBases,
}

impl Offline {
    pub fn psi(&self, strategy: Strategy) -> Option<&DMatrix<f64>> {
        self.left.for_strategy(strategy).unwrap()
    }
}

pub fn offline(problem: &dyn FeProblem, parameters: &[Vec<f64>], tol: &Tolerances, settings: &NewtonSettings) -> Offline {
    let fom = run_fom_campaign(problem, parameters, settings).unwrap();
    let phi = build_right_basis(&fom.snapshots, tol.eps_u).unwrap().matrix;
    let training = collect_left_training(problem, &phi, parameters, settings, LeftTrainingOptions::default()).unwrap();
    let left = LeftBases::from_training(&training, tol, &Strategy::ALL).unwrap();
    Offline { fom, phi, training, left }
}
