//! Shared fixtures for the criterion benches.

use gatefind_core::optimize::initial_alpha;
use gatefind_core::{build_terms, ControlVector, DeviceModel, HamiltonianTerms, PulseShape};

pub struct Fixture {
    pub terms: HamiltonianTerms,
    pub shape: PulseShape,
    pub alpha: ControlVector,
}

/// Reference device driven by a seeded random pulse of `n_terms` terms.
pub fn fixture(duration_ns: f64, n_terms: usize, seed: u64) -> Fixture {
    let model = DeviceModel::table1();
    let shape = PulseShape::table1(duration_ns, &model).expect("reference shape");
    Fixture {
        terms: build_terms(&model).expect("reference device"),
        alpha: initial_alpha(n_terms, &shape, seed),
        shape,
    }
}
