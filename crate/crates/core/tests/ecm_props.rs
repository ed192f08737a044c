mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use pgrom::ecm::{
    build_complementary_mesh, build_ecm_training_matrix, compress_training_matrix, quadrature_exactness,
    select_elements, train_quadrature, training_states, with_constant_row, EcmQuadrature, Integrand, WEIGHT_FLOOR,
};
use pgrom::fom::NewtonSettings;
use pgrom::rom::{run_rom_campaign, RomSolver};
use pgrom::testbed::{assemble_jacobian, assemble_residual, element_patches, FeProblem};

fn rotation(angles: [f64; 3]) -> DMatrix<f64> {
    let (a, b, c) = (angles[0], angles[1], angles[2]);
    let rx = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, a.cos(), -a.sin(), 0.0, a.sin(), a.cos()]);
    let ry = DMatrix::from_row_slice(3, 3, &[b.cos(), 0.0, b.sin(), 0.0, 1.0, 0.0, -b.sin(), 0.0, b.cos()]);
    let rz = DMatrix::from_row_slice(3, 3, &[c.cos(), -c.sin(), 0.0, c.sin(), c.cos(), 0.0, 0.0, 0.0, 1.0]);
    rz * ry * rx
}

fn fit(theta: &DMatrix<f64>, b: &DVector<f64>, q: &EcmQuadrature) -> f64 {
    let mut approx = DVector::zeros(b.len());
    for (&e, &w) in q.z.iter().zip(&q.omega) {
        approx.axpy(w, &theta.column(e), 1.0);
    }
    (approx - b).norm() / b.norm()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    /// Two columns in a plane, every other column strictly below it: the
    /// only nonnegative exact representation uses the planted pair.
    #[test]
    fn planted_pair_is_recovered(
        planted in (0usize..8, 1usize..8),
        w in (0.1..5.0f64, 0.1..5.0f64),
        pair in (0.0..6.28f64, 0.5..2.5f64),
        others in prop::collection::vec((-2.0..2.0f64, -2.0..2.0f64, -2.0..-0.1f64), 8),
        angles in prop::array::uniform3(0.0..6.28f64),
    ) {
        let (i, j) = (planted.0, (planted.0 + planted.1) % 8);
        let mut theta = DMatrix::zeros(3, 8);
        for (k, (x, y, z)) in others.iter().enumerate() {
            theta.set_column(k, &DVector::from_vec(vec![*x, *y, *z]));
        }
        let a = DVector::from_vec(vec![pair.0.cos(), pair.0.sin(), 0.0]);
        let c = DVector::from_vec(vec![(pair.0 + pair.1).cos(), (pair.0 + pair.1).sin(), 0.0]);
        theta.set_column(i, &a);
        theta.set_column(j, &c);
        let b = &a * w.0 + &c * w.1;
        let rot = rotation(angles);
        let q = select_elements(&(&rot * &theta), &(&rot * &b), 0.0).unwrap();

        let mut expect = vec![(i, w.0), (j, w.1)];
        expect.sort_by_key(|p| p.0);
        prop_assert_eq!(&q.z, &vec![expect[0].0, expect[1].0]);
        for (got, (_, want)) in q.omega.iter().zip(&expect) {
            prop_assert!((got - want).abs() <= 1e-9 * want, "{} vs {}", got, want);
        }
    }

    #[test]
    fn selection_is_positive_sparse_and_monotone(
        dims in (1usize..6, 2usize..12),
        seed in prop::collection::vec(-1.0..1.0f64, 6 * 12),
        eps in prop_oneof![Just(0.0), 1e-8..1e-2f64],
    ) {
        let (rows, cols) = dims;
        let x = DMatrix::from_fn(rows, cols, |r, c| seed[r * 12 + c] + 0.5);
        let compressed = with_constant_row(&compress_training_matrix(&x, eps).unwrap());
        let (theta, b) = (&compressed.theta, &compressed.b_theta);
        prop_assert!((theta * theta.transpose() - DMatrix::identity(theta.nrows(), theta.nrows())).amax() <= 1e-10);
        let q = select_elements(theta, b, eps).unwrap();
        prop_assert!(q.omega.iter().all(|&w| w > WEIGHT_FLOOR));
        prop_assert!(q.z.len() <= theta.nrows() && q.z.len() <= q.theta_rank);
        prop_assert!(q.z.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(q.fit_history.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)), "{:?}", q.fit_history);
        prop_assert!((fit(theta, b, &q) - q.fit_residual).abs() <= 1e-12);
        if q.converged {
            prop_assert!(q.fit_residual <= pgrom::ecm::effective_fit_tolerance(eps));
        }
    }
}

#[test]
fn training_targets_match_global_assembly() {
    let pulse = common::pulse(6);
    let settings = NewtonSettings::default();
    let params = common::pulse_training();
    let fom = pgrom::fom::run_fom_campaign(&pulse, &params, &settings).unwrap();
    let phi = pgrom::basis::build_right_basis(&fom.snapshots, 1e-3).unwrap().matrix;
    let trajs = run_rom_campaign(&pulse, &RomSolver::lspg(&phi), &params, &settings).unwrap();
    let states = training_states(&pulse, &params, &trajs, &phi, true).unwrap();
    assert!(states.len() > params.len() * pulse.steps().len());

    for (integrand, name) in [(Integrand::Projected(&phi), "projected"), (Integrand::JacobianWeighted(&phi), "jacobian")] {
        let training = build_ecm_training_matrix(&pulse, integrand, &states).unwrap();
        let n = phi.ncols();
        assert_eq!(training.x.nrows(), n * states.len());
        for (k, s) in states.iter().enumerate() {
            let frame = s.frame();
            let r = assemble_residual(&pulse, &s.u, &frame).unwrap();
            let direct = match integrand {
                Integrand::Projected(_) => phi.tr_mul(&r),
                Integrand::JacobianWeighted(_) => (assemble_jacobian(&pulse, &s.u, &frame).unwrap() * &phi).tr_mul(&r),
            };
            let b = training.b.rows(k * n, n);
            assert!((b - &direct).norm() <= 1e-10 * direct.norm().max(1e-300) + 1e-14, "{name} state {k}");
        }
        let full = EcmQuadrature::full(pulse.assembly().element_count());
        assert!(quadrature_exactness(&training, &full).iter().all(|&e| e <= 1e-12));
        let q = train_quadrature(&training, 1e-6).unwrap();
        assert!(q.omega.iter().all(|&w| w > 0.0));
    }
}

#[test]
fn patches_are_symmetric_and_cover_the_selection() {
    let pulse = common::pulse(5);
    let patches = element_patches(pulse.mesh());
    for p in &patches {
        assert!(p.patch.binary_search(&p.element).is_ok());
        for &o in &p.patch {
            assert!(patches[o].patch.binary_search(&p.element).is_ok(), "{} ~ {o}", p.element);
        }
    }
    let z = [0, 7, 23, 49];
    let comp = build_complementary_mesh(&z, &patches).unwrap();
    assert!(z.iter().all(|e| comp.binary_search(e).is_ok()));
    assert!(comp.windows(2).all(|w| w[0] < w[1]));
    assert!(build_complementary_mesh(&[500], &patches).is_err());
}
