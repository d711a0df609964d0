use approx::assert_abs_diff_eq;
use gatefind_core::gates::{cnot, cphase, random_unitary};
use gatefind_core::{
    infidelity_g0, minimize_theta, objective_value, CMatrix, EnsembleConfig, Functional, Objective, ObjectiveKind, C64,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn unitary(seed: u64, dim: usize) -> CMatrix {
    random_unitary(dim, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn small_ensemble() -> EnsembleConfig {
    EnsembleConfig {
        starts: 4,
        ..EnsembleConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn g0_is_symmetric_and_bounded(a in any::<u64>(), b in any::<u64>()) {
        let (u, v) = (unitary(a, 4), unitary(b, 4));
        let g = infidelity_g0(&u, &v).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&g));
        assert_abs_diff_eq!(g, infidelity_g0(&v, &u).unwrap(), epsilon = 1e-12);
    }

    #[test]
    fn objectives_ignore_global_phase(seed in any::<u64>(), phi in 0.0..std::f64::consts::TAU) {
        let u = unitary(seed, 9);
        let phased = u.scale(C64::from_polar(1.0, phi));
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x55);
        for kind in [ObjectiveKind::G0, ObjectiveKind::G1, ObjectiveKind::G2] {
            let obj = Objective::new(kind, cnot(), 3).unwrap();
            let theta: Vec<f64> = (0..kind.n_angles()).map(|_| rand::Rng::gen_range(&mut rng, -3.0..3.0)).collect();
            let t = (kind != ObjectiveKind::G0).then_some(theta.as_slice());
            let a = objective_value(&obj, &u, t).unwrap();
            let b = objective_value(&obj, &phased, t).unwrap();
            prop_assert!((a - b).abs() < 1e-12, "{kind:?}: {a} vs {b}");
        }
    }

    #[test]
    fn local_search_never_exceeds_plain_infidelity(seed in any::<u64>()) {
        let u = unitary(seed, 4);
        let fit = minimize_theta(Functional::F1, &cnot(), &u, None, &small_ensemble(), seed).unwrap();
        prop_assert!(fit.value <= infidelity_g0(&cnot(), &u).unwrap() + 1e-15);
    }
}

#[test]
fn cnot_and_cphase_are_locally_equivalent() {
    let fit = minimize_theta(Functional::F1, &cnot(), &cphase(), None, &EnsembleConfig::default(), 0).unwrap();
    assert!(fit.value <= 1e-6, "{}", fit.value);
}
