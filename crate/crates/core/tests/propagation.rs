use gatefind_core::gates::{pauli_x, pauli_z};
use gatefind_core::optimize::initial_alpha;
use gatefind_core::propagate::{propagate_unitary_with, ConstantField};
use gatefind_core::{
    build_terms, propagate_goat, propagate_state, propagate_unitary, CMatrix, DeviceModel, Frame, HamiltonianTerms,
    IntegratorConfig, PulseShape, C64,
};

#[test]
fn detuned_rabi_matches_closed_form() {
    // H = (Δ/2) σz + (Ω/2) σx
    let (delta, omega) = (0.7, 1.9);
    let terms = HamiltonianTerms::from_operators(pauli_z().scale(C64::new(delta / 2.0, 0.0)), pauli_x()).unwrap();
    let w = (omega * omega + delta * delta).sqrt();
    for frame in [Frame::Interaction, Frame::Lab] {
        let cfg = IntegratorConfig {
            frame,
            ..IntegratorConfig::default()
        };
        for t in [0.5, 2.0, 7.3] {
            let r = propagate_unitary_with(
                &terms,
                &ConstantField {
                    amplitude: omega / 2.0,
                    duration: t,
                },
                &cfg,
            )
            .unwrap();
            let p1 = r.u.get(1, 0).norm_sqr();
            let exact = (omega / w).powi(2) * (w * t / 2.0).sin().powi(2);
            assert!((p1 - exact).abs() < 1e-6, "{frame:?} t={t}: {p1} vs {exact}");
        }
    }
}

#[test]
fn full_length_pulse_stays_unitary() {
    let model = DeviceModel::table1();
    let terms = build_terms(&model).unwrap();
    let shape = PulseShape::table1(200.0, &model).unwrap();
    let alpha = initial_alpha(22, &shape, 11);
    let r = propagate_unitary(&terms, &alpha, &shape, &IntegratorConfig::default()).unwrap();
    assert!(r.u.unitarity_defect() <= 1e-6, "{}", r.u.unitarity_defect());
}

#[test]
fn state_propagation_agrees_with_unitary_columns() {
    let model = DeviceModel::table1();
    let terms = build_terms(&model).unwrap();
    let shape = PulseShape::table1(20.0, &model).unwrap();
    let alpha = initial_alpha(3, &shape, 2);
    let cfg = IntegratorConfig::with_tolerances(1e-10, 1e-12);
    let u = propagate_unitary(&terms, &alpha, &shape, &cfg).unwrap().u;
    let mut psi0 = vec![C64::new(0.0, 0.0); 9];
    psi0[4] = C64::new(1.0, 0.0);
    let traj = propagate_state(&terms, &alpha, &shape, &cfg, &psi0, 5).unwrap();
    let last = traj.states.last().unwrap();
    for (j, amp) in last.iter().enumerate() {
        assert!((amp - u.get(j, 4)).norm() < 1e-7);
    }
}

#[test]
fn goat_derivatives_match_finite_differences_on_table1_device() {
    let model = DeviceModel::table1();
    let terms = build_terms(&model).unwrap();
    let shape = PulseShape::table1(8.0, &model).unwrap();
    let alpha = initial_alpha(2, &shape, 5);
    let cfg = IntegratorConfig::with_tolerances(1e-11, 1e-13);
    let g = propagate_goat(&terms, &alpha, &shape, &cfg).unwrap();
    let h = 1e-5;
    for k in 0..alpha.len() {
        let up = propagate_unitary(&terms, &alpha.shifted(k, h), &shape, &cfg).unwrap().u;
        let dn = propagate_unitary(&terms, &alpha.shifted(k, -h), &shape, &cfg)
            .unwrap()
            .u;
        let fd = CMatrix::from_fn(9, 9, |i, j| (up.get(i, j) - dn.get(i, j)) / (2.0 * h));
        let err = fd.max_abs_diff(&g.du[k]);
        assert!(err <= 1e-6 * g.du[k].max_abs().max(1e-3), "k={k}: {err}");
    }
}
