//! Schrödinger propagation of the full lab-frame Hamiltonian.
//!
//! `U' = -i H(t) U` with `H(t) = H0 + γ(t) C`, and the GOAT sensitivities
//! `(∂ₖU)' = -i (∂ₖγ C U + H ∂ₖU)`, integrated as one augmented system so
//! every derivative block shares the step sequence of `U`.

use crate::device::{HamiltonianTerms, SparseEntry};
use crate::error::{dims, invalid, Result};
use crate::matrix::{CMatrix, C64};
use crate::ode::{integrate, Frame, IntegratorConfig, SolveStats};
use crate::pulse::{control_field, control_field_with_grad, ControlVector, PulseShape};

/// A scalar control field on `[0, duration]` with optional parameter
/// sensitivities.
pub trait FieldSchedule {
    fn duration(&self) -> f64;
    fn n_params(&self) -> usize;
    fn field(&self, t: f64) -> f64;
    /// Field value, writing `∂γ/∂p` into `grad`.
    fn field_with_grad(&self, t: f64, grad: &mut [f64]) -> f64;
}

/// The analytic pulse `γ(α, t)`.
#[derive(Debug, Clone, Copy)]
pub struct PulseSchedule<'a> {
    pub alpha: &'a ControlVector,
    pub shape: &'a PulseShape,
}

impl FieldSchedule for PulseSchedule<'_> {
    fn duration(&self) -> f64 {
        self.shape.duration
    }

    fn n_params(&self) -> usize {
        self.alpha.len()
    }

    fn field(&self, t: f64) -> f64 {
        control_field(self.alpha, t, self.shape)
    }

    fn field_with_grad(&self, t: f64, grad: &mut [f64]) -> f64 {
        control_field_with_grad(self.alpha, t, self.shape, grad)
    }
}

/// Constant field with no parameters; handy for reduced test models.
#[derive(Debug, Clone, Copy)]
pub struct ConstantField {
    pub amplitude: f64,
    pub duration: f64,
}

impl FieldSchedule for ConstantField {
    fn duration(&self) -> f64 {
        self.duration
    }

    fn n_params(&self) -> usize {
        0
    }

    fn field(&self, _t: f64) -> f64 {
        self.amplitude
    }

    fn field_with_grad(&self, _t: f64, _grad: &mut [f64]) -> f64 {
        self.amplitude
    }
}

#[derive(Debug, Clone)]
pub struct UnitaryResult {
    pub u: CMatrix,
    pub stats: SolveStats,
}

/// Final propagator plus `∂U/∂α_k` for every parameter.
#[derive(Debug, Clone)]
pub struct GoatResult {
    pub u: CMatrix,
    pub du: Vec<CMatrix>,
    pub stats: SolveStats,
}

/// Sampled state evolution.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<C64>>,
    /// `|⟨n₁n₂|ψ(t)⟩|²`, indexed `levels*n₁ + n₂`.
    pub populations: Vec<Vec<f64>>,
    pub stats: SolveStats,
}

/// Right-hand-side operator in the chosen frame.
///
/// In the interaction frame, with `D(t) = exp(-i H_d t)` for the diagonal
/// part `H_d` of the drift, the integrated variable is `D(t)† U(t)` and the
/// generator becomes `D† (H0 - H_d + γ C) D`, whose entries pick up the
/// phases `exp(i (E_j - E_k) t)`.
struct Kernel {
    entries: Vec<SparseEntry>,
    /// Bare energies `E_j`; `None` in the lab frame.
    energies: Option<Vec<f64>>,
    level_phase: Vec<C64>,
    entry_phase: Vec<C64>,
}

impl Kernel {
    fn new(terms: &HamiltonianTerms, frame: Frame) -> Self {
        let pattern = terms.pattern();
        match frame {
            Frame::Lab => Self {
                entries: pattern.to_vec(),
                energies: None,
                level_phase: Vec::new(),
                entry_phase: Vec::new(),
            },
            Frame::Interaction => {
                let d = terms.dim();
                let energies: Vec<f64> = (0..d).map(|j| terms.drift().get(j, j).re).collect();
                let entries: Vec<SparseEntry> = pattern
                    .iter()
                    .map(|e| SparseEntry {
                        drift: if e.row == e.col { 0.0 } else { e.drift },
                        ..*e
                    })
                    .filter(|e| e.drift != 0.0 || e.drive != 0.0)
                    .collect();
                let n = entries.len();
                Self {
                    entries,
                    energies: Some(energies),
                    level_phase: vec![C64::new(1.0, 0.0); d],
                    entry_phase: vec![C64::new(1.0, 0.0); n],
                }
            }
        }
    }

    fn set_time(&mut self, t: f64) {
        let Some(energies) = &self.energies else { return };
        for (p, e) in self.level_phase.iter_mut().zip(energies) {
            let (s, c) = (e * t).sin_cos();
            *p = C64::new(c, s);
        }
        for (ph, e) in self.entry_phase.iter_mut().zip(&self.entries) {
            *ph = self.level_phase[e.row] * self.level_phase[e.col].conj();
        }
    }

    /// `out = -i H x` for a row-major block `x` with `ncols` columns.
    #[inline]
    fn apply_h(&self, gamma: f64, x: &[C64], out: &mut [C64], ncols: usize) {
        out.fill(C64::new(0.0, 0.0));
        if self.energies.is_none() {
            for e in &self.entries {
                let v = e.drift + gamma * e.drive;
                if v == 0.0 {
                    continue;
                }
                let src = &x[e.col * ncols..(e.col + 1) * ncols];
                let dst = &mut out[e.row * ncols..(e.row + 1) * ncols];
                for (d, s) in dst.iter_mut().zip(src) {
                    // -i v s
                    d.re += v * s.im;
                    d.im -= v * s.re;
                }
            }
            return;
        }
        for (e, ph) in self.entries.iter().zip(&self.entry_phase) {
            let v = e.drift + gamma * e.drive;
            if v == 0.0 {
                continue;
            }
            let m = C64::new(ph.im * v, -ph.re * v);
            let src = &x[e.col * ncols..(e.col + 1) * ncols];
            let dst = &mut out[e.row * ncols..(e.row + 1) * ncols];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += m * s;
            }
        }
    }

    /// `out = C x` (no factor of -i).
    #[inline]
    fn apply_drive(&self, x: &[C64], out: &mut [C64], ncols: usize) {
        out.fill(C64::new(0.0, 0.0));
        for (i, e) in self.entries.iter().enumerate() {
            if e.drive == 0.0 {
                continue;
            }
            let c = match self.energies {
                None => C64::new(e.drive, 0.0),
                Some(_) => self.entry_phase[i] * e.drive,
            };
            let src = &x[e.col * ncols..(e.col + 1) * ncols];
            let dst = &mut out[e.row * ncols..(e.row + 1) * ncols];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += c * s;
            }
        }
    }

    /// Maps integrated rows back to the lab frame at time `t`.
    fn to_lab(&self, t: f64, y: &mut [C64], ncols: usize) {
        let Some(energies) = &self.energies else { return };
        for (row, e) in y.chunks_exact_mut(ncols).zip(energies.iter().cycle()) {
            let (s, c) = (e * t).sin_cos();
            let p = C64::new(c, -s);
            row.iter_mut().for_each(|z| *z *= p);
        }
    }
}

fn identity_packed(d: usize) -> Vec<C64> {
    let mut y = vec![C64::new(0.0, 0.0); d * d];
    for i in 0..d {
        y[i * d + i] = C64::new(1.0, 0.0);
    }
    y
}

/// `U(T)` for an arbitrary field schedule.
pub fn propagate_unitary_with(
    terms: &HamiltonianTerms,
    schedule: &dyn FieldSchedule,
    cfg: &IntegratorConfig,
) -> Result<UnitaryResult> {
    let d = terms.dim();
    let duration = schedule.duration();
    let mut kernel = Kernel::new(terms, cfg.frame);
    let (mut y, stats) = integrate(
        |t, y, dy| {
            kernel.set_time(t);
            kernel.apply_h(schedule.field(t), y, dy, d)
        },
        &identity_packed(d),
        0.0,
        duration,
        cfg,
        &[],
        |_, _| {},
    )?;
    kernel.to_lab(duration, &mut y, d);
    Ok(UnitaryResult {
        u: CMatrix::from_packed(d, d, &y),
        stats,
    })
}

/// Propagator `U(T_c)` generated by the pulse `α`.
pub fn propagate_unitary(
    terms: &HamiltonianTerms,
    alpha: &ControlVector,
    shape: &PulseShape,
    cfg: &IntegratorConfig,
) -> Result<UnitaryResult> {
    propagate_unitary_with(terms, &PulseSchedule { alpha, shape }, cfg)
}

/// `U(T)` and all parameter derivatives for an arbitrary schedule.
pub fn propagate_goat_with(
    terms: &HamiltonianTerms,
    schedule: &dyn FieldSchedule,
    cfg: &IntegratorConfig,
) -> Result<GoatResult> {
    let d = terms.dim();
    let block = d * d;
    let k = schedule.n_params();
    let duration = schedule.duration();
    let mut kernel = Kernel::new(terms, cfg.frame);

    let mut y0 = vec![C64::new(0.0, 0.0); block * (1 + k)];
    y0[..block].copy_from_slice(&identity_packed(d));

    let mut grad = vec![0.0; k];
    let mut cu = vec![C64::new(0.0, 0.0); block];
    let (mut y, stats) = {
        let kernel = &mut kernel;
        let rhs = |t: f64, y: &[C64], dy: &mut [C64]| {
            kernel.set_time(t);
            let gamma = schedule.field_with_grad(t, &mut grad);
            let (u, du) = y.split_at(block);
            let (du_out, ddu_out) = dy.split_at_mut(block);
            kernel.apply_h(gamma, u, du_out, d);
            kernel.apply_drive(u, &mut cu, d);
            for ((g, src), dst) in grad
                .iter()
                .zip(du.chunks_exact(block))
                .zip(ddu_out.chunks_exact_mut(block))
            {
                kernel.apply_h(gamma, src, dst, d);
                if *g != 0.0 {
                    for (o, c) in dst.iter_mut().zip(&cu) {
                        // -i g (C U)
                        o.re += g * c.im;
                        o.im -= g * c.re;
                    }
                }
            }
        };
        integrate(rhs, &y0, 0.0, duration, cfg, &[], |_, _| {})?
    };
    for b in y.chunks_exact_mut(block) {
        kernel.to_lab(duration, b, d);
    }
    let u = CMatrix::from_packed(d, d, &y[..block]);
    let du = y[block..]
        .chunks_exact(block)
        .map(|b| CMatrix::from_packed(d, d, b))
        .collect();
    Ok(GoatResult { u, du, stats })
}

/// Jointly integrates `U` and `∂U/∂α_k` for every entry of `α`.
pub fn propagate_goat(
    terms: &HamiltonianTerms,
    alpha: &ControlVector,
    shape: &PulseShape,
    cfg: &IntegratorConfig,
) -> Result<GoatResult> {
    propagate_goat_with(terms, &PulseSchedule { alpha, shape }, cfg)
}

/// State trajectory sampled at `n_samples` uniform times in `[0, T]`.
pub fn propagate_state_with(
    terms: &HamiltonianTerms,
    schedule: &dyn FieldSchedule,
    cfg: &IntegratorConfig,
    psi0: &[C64],
    n_samples: usize,
) -> Result<Trajectory> {
    let d = terms.dim();
    if psi0.len() != d {
        return Err(dims(format!("{d} amplitudes"), format!("{}", psi0.len())));
    }
    let norm: f64 = psi0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(invalid("psi0", format!("state must be normalized, norm = {norm}")));
    }
    if n_samples < 2 {
        return Err(invalid("n_samples", "need at least 2 samples"));
    }
    let duration = schedule.duration();
    let times: Vec<f64> = (0..n_samples)
        .map(|i| {
            if i + 1 == n_samples {
                duration
            } else {
                duration * i as f64 / (n_samples - 1) as f64
            }
        })
        .collect();
    let mut kernel = Kernel::new(terms, cfg.frame);
    let mut states = vec![Vec::new(); n_samples];
    let (_, stats) = {
        let kernel = &mut kernel;
        integrate(
            |t, y, dy| {
                kernel.set_time(t);
                kernel.apply_h(schedule.field(t), y, dy, 1)
            },
            psi0,
            0.0,
            duration,
            cfg,
            &times,
            |i, y| states[i] = y.to_vec(),
        )?
    };
    for (s, &t) in states.iter_mut().zip(&times) {
        kernel.to_lab(t, s, 1);
    }
    let populations = states
        .iter()
        .map(|s| s.iter().map(|z| z.norm_sqr()).collect())
        .collect();
    Ok(Trajectory {
        times,
        states,
        populations,
        stats,
    })
}

/// Evolves `psi0` under the pulse `α`, sampling `n_samples` times.
pub fn propagate_state(
    terms: &HamiltonianTerms,
    alpha: &ControlVector,
    shape: &PulseShape,
    cfg: &IntegratorConfig,
    psi0: &[C64],
    n_samples: usize,
) -> Result<Trajectory> {
    propagate_state_with(terms, &PulseSchedule { alpha, shape }, cfg, psi0, n_samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::{build_terms, DeviceModel};
    use crate::gates::pauli_x;
    use crate::pulse::{dressed_frequency, Saturation};
    use std::f64::consts::{FRAC_1_SQRT_2, TAU};

    fn shape(duration: f64) -> PulseShape {
        PulseShape {
            saturation_bound: TAU * 0.08,
            gain: 4.0,
            window_height: TAU * 0.03,
            ramp_fraction: 0.3,
            duration,
            carrier_freq: dressed_frequency(&DeviceModel::table1()).unwrap(),
            saturation: Saturation::Logistic,
            drive_scale: 1.0,
        }
    }

    fn desk_alpha() -> ControlVector {
        ControlVector::from_triples(&[(0.12, 0.35, 0.4), (-0.08, 1.1, 2.0)]).unwrap()
    }

    #[test]
    fn uncoupled_drift_gives_diagonal_phases() {
        let m = DeviceModel {
            coupling: 0.0,
            ..DeviceModel::table1()
        };
        let terms = build_terms(&m).unwrap();
        let s = shape(5.0);
        let r = propagate_unitary(&terms, &ControlVector::zeros(1), &s, &IntegratorConfig::default()).unwrap();
        let phases: Vec<C64> = (0..9)
            .map(|j| C64::from_polar(1.0, -terms.drift().get(j, j).re * s.duration))
            .collect();
        let exact = CMatrix::from_diagonal(&phases);
        assert!(r.u.max_abs_diff(&exact) < 1e-6, "{}", r.u.max_abs_diff(&exact));
    }

    #[test]
    fn frames_agree() {
        let terms = build_terms(&DeviceModel::table1()).unwrap();
        let s = shape(6.0);
        let tight = IntegratorConfig::with_tolerances(1e-12, 1e-14);
        let lab = IntegratorConfig {
            frame: Frame::Lab,
            ..tight
        };
        let a = propagate_goat(&terms, &desk_alpha(), &s, &tight).unwrap();
        let b = propagate_goat(&terms, &desk_alpha(), &s, &lab).unwrap();
        assert!(a.u.max_abs_diff(&b.u) < 1e-8, "{}", a.u.max_abs_diff(&b.u));
        for (x, y) in a.du.iter().zip(&b.du) {
            assert!(x.max_abs_diff(y) < 1e-8 * x.max_abs().max(1.0));
        }
        assert!(a.stats.rhs_evals < b.stats.rhs_evals);
    }

    #[test]
    fn zero_hamiltonian_is_identity() {
        let terms = HamiltonianTerms::from_operators(CMatrix::zeros(9, 9), CMatrix::zeros(9, 9)).unwrap();
        let r = propagate_unitary_with(
            &terms,
            &ConstantField {
                amplitude: 0.0,
                duration: 3.0,
            },
            &IntegratorConfig::default(),
        )
        .unwrap();
        assert_eq!(r.u, CMatrix::identity(9));
    }

    #[test]
    fn rabi_oscillation_matches_closed_form() {
        // rotating-frame two-level model, H = (Ω/2) σx
        let omega = 2.0;
        let terms = HamiltonianTerms::from_operators(CMatrix::zeros(2, 2), pauli_x()).unwrap();
        let cfg = IntegratorConfig::default();
        for t in [0.3, 1.0, 2.5, 4.0] {
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
            assert!((p1 - (omega * t / 2.0).sin().powi(2)).abs() < 1e-6);
        }
    }

    #[test]
    fn goat_blocks_vanish_for_phase_at_zero_amplitude() {
        let terms = build_terms(&DeviceModel::table1()).unwrap();
        let s = shape(4.0);
        let a = ControlVector::from_triples(&[(0.0, 0.3, 0.5), (0.0, 0.7, 1.5)]).unwrap();
        let g = propagate_goat(&terms, &a, &s, &IntegratorConfig::fast()).unwrap();
        assert_eq!(g.du.len(), 6);
        for k in [1, 2, 4, 5] {
            assert_eq!(g.du[k].max_abs(), 0.0, "block {k}");
        }
        assert!(g.du[0].max_abs() > 0.0);
    }

    #[test]
    fn goat_matches_finite_differences() {
        let terms = build_terms(&DeviceModel::table1()).unwrap();
        let s = shape(10.0);
        let a = desk_alpha();
        let cfg = IntegratorConfig::default();
        let tight = IntegratorConfig::with_tolerances(1e-12, 1e-14);
        let g = propagate_goat(&terms, &a, &s, &cfg).unwrap();
        let eps = 1e-5;
        for k in 0..a.len() {
            let up = propagate_unitary(&terms, &a.shifted(k, eps), &s, &tight).unwrap().u;
            let dn = propagate_unitary(&terms, &a.shifted(k, -eps), &s, &tight).unwrap().u;
            let fd = (up - dn).scale(C64::new(0.5 / eps, 0.0));
            let err = fd.max_abs_diff(&g.du[k]);
            assert!(
                err <= 1e-4 * g.du[k].max_abs() + 1e-8,
                "k = {k}: err {err}, scale {}",
                g.du[k].max_abs()
            );
        }
    }

    #[test]
    fn goat_unitary_block_agrees_with_plain_propagation() {
        let terms = build_terms(&DeviceModel::table1()).unwrap();
        let s = shape(10.0);
        let cfg = IntegratorConfig::default();
        let g = propagate_goat(&terms, &desk_alpha(), &s, &cfg).unwrap();
        let u = propagate_unitary(&terms, &desk_alpha(), &s, &cfg).unwrap().u;
        assert!(g.u.max_abs_diff(&u) <= 10.0 * cfg.rel_tol);
        assert!(g.u.unitarity_defect() <= 100.0 * cfg.rel_tol);
    }

    #[test]
    fn tightening_tolerances_moves_result_little() {
        let terms = build_terms(&DeviceModel::table1()).unwrap();
        let s = shape(10.0);
        let cfg = IntegratorConfig::fast();
        let half = IntegratorConfig::with_tolerances(cfg.rel_tol / 2.0, cfg.abs_tol / 2.0);
        let a = propagate_unitary(&terms, &desk_alpha(), &s, &cfg).unwrap().u;
        let b = propagate_unitary(&terms, &desk_alpha(), &s, &half).unwrap().u;
        assert!(a.max_abs_diff(&b) < 10.0 * cfg.rel_tol);
    }

    struct Reversed<'a> {
        inner: PulseSchedule<'a>,
    }

    impl FieldSchedule for Reversed<'_> {
        fn duration(&self) -> f64 {
            self.inner.duration()
        }
        fn n_params(&self) -> usize {
            0
        }
        fn field(&self, t: f64) -> f64 {
            self.inner.field(self.inner.duration() - t)
        }
        fn field_with_grad(&self, t: f64, _: &mut [f64]) -> f64 {
            self.field(t)
        }
    }

    #[test]
    fn backward_propagation_returns_to_identity() {
        let m = DeviceModel::table1();
        let terms = build_terms(&m).unwrap();
        let s = shape(5.0);
        let a = desk_alpha();
        let cfg = IntegratorConfig::default();
        let fwd = propagate_unitary(&terms, &a, &s, &cfg).unwrap().u;
        // -H(T - τ): negate both drift and drive operator
        let neg = |x: &CMatrix| x.scale(C64::new(-1.0, 0.0));
        let back_terms = HamiltonianTerms::from_operators(neg(terms.drift()), neg(terms.control1())).unwrap();
        let back = propagate_unitary_with(
            &back_terms,
            &Reversed {
                inner: PulseSchedule { alpha: &a, shape: &s },
            },
            &cfg,
        )
        .unwrap()
        .u;
        let round_trip = &back * &fwd;
        assert!(round_trip.max_abs_diff(&CMatrix::identity(9)) <= 100.0 * cfg.rel_tol);
    }

    #[test]
    fn state_trajectory_preserves_norm_and_starts_at_psi0() {
        let terms = build_terms(&DeviceModel::table1()).unwrap();
        let s = shape(10.0);
        let mut psi0 = vec![C64::new(0.0, 0.0); 9];
        psi0[0] = C64::new(FRAC_1_SQRT_2, 0.0);
        psi0[3] = C64::new(FRAC_1_SQRT_2, 0.0);
        let cfg = IntegratorConfig::default();
        let tr = propagate_state(&terms, &desk_alpha(), &s, &cfg, &psi0, 101).unwrap();
        assert_eq!(tr.times.len(), 101);
        assert_eq!(tr.times[0], 0.0);
        assert_eq!(*tr.times.last().unwrap(), 10.0);
        assert!((tr.populations[0][0] - 0.5).abs() < 1e-15);
        assert!((tr.populations[0][3] - 0.5).abs() < 1e-15);
        for row in &tr.populations {
            assert!((row.iter().sum::<f64>() - 1.0).abs() <= 100.0 * cfg.rel_tol);
        }
        // final sample equals the propagator applied to psi0
        let u = propagate_unitary(&terms, &desk_alpha(), &s, &cfg).unwrap().u;
        let last = tr.states.last().unwrap();
        for (i, amp) in last.iter().enumerate() {
            let expected = (u.get(i, 0) + u.get(i, 3)) * FRAC_1_SQRT_2;
            assert!((amp - expected).norm() < 1e-6);
        }
    }

    #[test]
    fn stationary_populations_without_drive_or_coupling() {
        let m = DeviceModel {
            coupling: 0.0,
            ..DeviceModel::table1()
        };
        let terms = build_terms(&m).unwrap();
        let s = shape(5.0);
        let mut psi0 = vec![C64::new(0.0, 0.0); 9];
        psi0[1] = C64::new(0.6, 0.0);
        psi0[4] = C64::new(0.0, 0.8);
        let tr = propagate_state(
            &terms,
            &ControlVector::zeros(1),
            &s,
            &IntegratorConfig::default(),
            &psi0,
            11,
        )
        .unwrap();
        for row in &tr.populations {
            assert!((row[1] - 0.36).abs() < 1e-8 && (row[4] - 0.64).abs() < 1e-8);
        }
    }

    #[test]
    fn state_input_validation() {
        let terms = build_terms(&DeviceModel::table1()).unwrap();
        let s = shape(1.0);
        let bad = vec![C64::new(1.0, 0.0); 9];
        assert!(propagate_state(&terms, &desk_alpha(), &s, &IntegratorConfig::default(), &bad, 5).is_err());
        assert!(propagate_state(&terms, &desk_alpha(), &s, &IntegratorConfig::default(), &bad[..4], 5).is_err());
    }
}
