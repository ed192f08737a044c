mod common;

use pgrom::fom::{run_fom_campaign, run_fom_trajectory, NewtonSettings};
use pgrom::testbed::FeProblem;

#[test]
fn campaigns_are_bitwise_reproducible() {
    let bar = common::bar();
    let a = run_fom_campaign(&bar, &common::bar_training(), &common::bar_settings()).unwrap();
    let b = run_fom_campaign(&bar, &common::bar_training(), &common::bar_settings()).unwrap();
    assert_eq!(a.snapshots.provenance, b.snapshots.provenance);
    let bits = |m: &nalgebra::DMatrix<f64>| m.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.snapshots.matrix), bits(&b.snapshots.matrix));
    assert_eq!(a.snapshots.len(), 5 * bar.steps().len());
}

#[test]
fn linear_problem_converges_in_one_step() {
    let pulse = common::pulse(8);
    for mu in common::pulse_training() {
        let traj = run_fom_trajectory(&pulse, &mu, &NewtonSettings::default()).unwrap();
        for t in &traj.traces {
            assert_eq!(t.iterations(), 1, "{:?}", t.residual_norms);
        }
    }
}

#[test]
fn bar_newton_converges_quadratically() {
    let bar = common::bar();
    let traj = run_fom_trajectory(&bar, &[2.0], &NewtonSettings::default()).unwrap();
    let mut checked = 0;
    for t in &traj.traces {
        let r = &t.residual_norms;
        assert!(t.last_residual() <= 1e-9 * r[0] + 1e-12);
        if r.len() < 3 {
            continue;
        }
        let k = r.len() - 1;
        let ratio = r[k] / (r[k - 1] * r[k - 1]);
        assert!(ratio <= 1e3, "ratio {ratio:e} in {r:?}");
        checked += 1;
    }
    assert!(checked > 0);
}

#[test]
fn newton_reports_divergence_with_its_history() {
    let bar = common::bar();
    let settings = NewtonSettings { max_iterations: 1, ..common::bar_settings() };
    let err = run_fom_trajectory(&bar, &[2.0], &settings).unwrap_err();
    assert!(matches!(err.root(), pgrom::Error::Divergence { .. }), "{err}");
}
