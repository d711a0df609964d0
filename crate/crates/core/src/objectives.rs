//! Gate objectives.
//!
//! - `G0(U₁, U₂) = 1 − |Tr(U₁† U₂)|² / d²`, the plain infidelity;
//! - `G1 = min_θ G0(U_T, R(θ₁) U R(θ₂))`, infidelity up to local rotations;
//! - `G2 = min_θ G0(U_T, R(θ₃) U R(θ₂) U R(θ₁))`, infidelity of the echoed
//!   pulse with rotations before, between and after.
//!
//! Device propagators are first projected onto the qubit subspace, so
//! leakage lowers the trace overlap and is penalized automatically.

use nalgebra::Matrix4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::error::{dims, invalid, Error, Result};
use crate::gates::{euler_layer_fixed, from_fixed4, to_fixed4, LAYER_ANGLES};
use crate::matrix::{CMatrix, C64};
use crate::optimize::nelder_mead::{nelder_mead_minimize, NelderMeadConfig};
use crate::propagate::GoatResult;
use crate::subspace::SubspaceIsometry;

/// `1 − |Tr(u1† u2)|² / d²`.
pub fn infidelity_g0(u1: &CMatrix, u2: &CMatrix) -> Result<f64> {
    if u1.shape() != u2.shape() || !u1.is_square() {
        return Err(dims(format!("{:?}", u1.shape()), format!("{:?}", u2.shape())));
    }
    let d = u1.rows() as f64;
    let tr: C64 = (0..u1.rows())
        .flat_map(|i| (0..u1.cols()).map(move |j| (i, j)))
        .map(|(i, j)| u1.get(i, j).conj() * u2.get(i, j))
        .sum();
    Ok(1.0 - tr.norm_sqr() / (d * d))
}

#[inline]
fn g0_fixed(target_adj: &Matrix4<C64>, u: &Matrix4<C64>) -> f64 {
    1.0 - trace_product(target_adj, u).norm_sqr() / 16.0
}

/// `Tr(a b)` without forming the product.
#[inline]
fn trace_product(a: &Matrix4<C64>, b: &Matrix4<C64>) -> C64 {
    let mut s = C64::new(0.0, 0.0);
    for i in 0..4 {
        for j in 0..4 {
            s += a[(i, j)] * b[(j, i)];
        }
    }
    s
}

/// Functional applied to the device gate before comparing with the target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Functional {
    /// `R(θ₁) U R(θ₂)`, 12 angles.
    F1,
    /// `R(θ₃) U R(θ₂) U R(θ₁)`, 18 angles.
    F2,
}

impl Functional {
    pub fn n_angles(self) -> usize {
        match self {
            Functional::F1 => 2 * LAYER_ANGLES,
            Functional::F2 => 3 * LAYER_ANGLES,
        }
    }

    fn check(self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.n_angles() {
            return Err(dims(
                format!("{} angles", self.n_angles()),
                format!("{} angles", theta.len()),
            ));
        }
        Ok(())
    }

    fn apply_fixed(self, theta: &[f64], u: &Matrix4<C64>) -> Matrix4<C64> {
        let layer = |i: usize| euler_layer_fixed(&theta[i * LAYER_ANGLES..(i + 1) * LAYER_ANGLES]);
        match self {
            Functional::F1 => layer(0) * u * layer(1),
            Functional::F2 => layer(2) * u * layer(1) * u * layer(0),
        }
    }

    /// Applies the functional to a 4×4 gate.
    pub fn apply(self, theta: &[f64], u: &CMatrix) -> Result<CMatrix> {
        self.check(theta)?;
        if u.shape() != (4, 4) {
            return Err(dims("4x4", format!("{:?}", u.shape())));
        }
        Ok(from_fixed4(&self.apply_fixed(theta, &to_fixed4(u))))
    }
}

/// `R(θ₁) u R(θ₂)` with `θ = [θ₁, θ₂]`.
pub fn functional_f1(theta: &[f64], u: &CMatrix) -> Result<CMatrix> {
    Functional::F1.apply(theta, u)
}

/// `R(θ₃) u R(θ₂) u R(θ₁)` with `θ = [θ₁, θ₂, θ₃]`; `θ₁` acts first.
pub fn functional_f2(theta: &[f64], u: &CMatrix) -> Result<CMatrix> {
    Functional::F2.apply(theta, u)
}

/// Multi-start Nelder–Mead settings for the angle search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    /// Total starts, including `θ = 0` and the warm start when given.
    pub starts: usize,
    pub max_iters: usize,
    pub f_tol: f64,
    pub initial_step: f64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            starts: 32,
            max_iters: 2000,
            f_tol: 1e-10,
            initial_step: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThetaFit {
    pub theta: Vec<f64>,
    pub value: f64,
    /// Which start produced the winner (0 is `θ = 0`, 1 the warm start if any).
    pub start_index: usize,
    /// Starts that ended on a non-finite value and were skipped.
    pub failed_starts: usize,
}

/// Best `G0(u_target, F(θ, u_candidate))` over an ensemble of local searches.
///
/// The ensemble always contains `θ = 0`, then `warm_start` when supplied,
/// then uniform draws in `[0, 2π)` from a generator seeded with `seed`.
/// Ties go to the lowest start index.
pub fn minimize_theta(
    kind: Functional,
    u_target: &CMatrix,
    u_candidate: &CMatrix,
    warm_start: Option<&[f64]>,
    ensemble: &EnsembleConfig,
    seed: u64,
) -> Result<ThetaFit> {
    if u_target.shape() != (4, 4) || u_candidate.shape() != (4, 4) {
        return Err(dims(
            "4x4 target and candidate",
            format!("{:?} and {:?}", u_target.shape(), u_candidate.shape()),
        ));
    }
    if let Some(w) = warm_start {
        kind.check(w)?;
    }
    if ensemble.starts == 0 {
        return Err(invalid("ensemble.starts", "need at least one start"));
    }
    let n = kind.n_angles();
    let mut starts: Vec<Vec<f64>> = vec![vec![0.0; n]];
    if let Some(w) = warm_start {
        starts.push(w.to_vec());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while starts.len() < ensemble.starts.max(starts.len()) {
        starts.push((0..n).map(|_| rng.gen_range(0.0..TAU)).collect());
    }

    let target_adj = to_fixed4(u_target).adjoint();
    let cand = to_fixed4(u_candidate);
    let nm = NelderMeadConfig {
        max_iters: ensemble.max_iters,
        f_tol: ensemble.f_tol,
        initial_step: ensemble.initial_step,
    };
    let results: Vec<_> = starts
        .par_iter()
        .map(|x0| nelder_mead_minimize(|th| g0_fixed(&target_adj, &kind.apply_fixed(th, &cand)), x0, &nm))
        .collect();

    let mut best: Option<(usize, &crate::optimize::nelder_mead::NelderMeadResult)> = None;
    let mut failed = 0;
    for (i, r) in results.iter().enumerate() {
        if !r.value.is_finite() {
            failed += 1;
            continue;
        }
        match best {
            Some((_, b)) if r.value >= b.value => {}
            _ => best = Some((i, r)),
        }
    }
    let (start_index, r) = best.ok_or_else(|| invalid("theta", "every ensemble start failed"))?;
    Ok(ThetaFit {
        theta: r.x.clone(),
        value: r.value,
        start_index,
        failed_starts: failed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveKind {
    G0,
    G1,
    G2,
}

impl ObjectiveKind {
    pub fn functional(self) -> Option<Functional> {
        match self {
            ObjectiveKind::G0 => None,
            ObjectiveKind::G1 => Some(Functional::F1),
            ObjectiveKind::G2 => Some(Functional::F2),
        }
    }

    pub fn n_angles(self) -> usize {
        self.functional().map_or(0, Functional::n_angles)
    }

    pub fn name(self) -> &'static str {
        match self {
            ObjectiveKind::G0 => "g0",
            ObjectiveKind::G1 => "g1",
            ObjectiveKind::G2 => "g2",
        }
    }
}

/// An objective kind bound to a 4×4 target and the device's subspace.
#[derive(Debug, Clone)]
pub struct Objective {
    pub kind: ObjectiveKind,
    target: CMatrix,
    isometry: SubspaceIsometry,
}

impl Objective {
    pub fn new(kind: ObjectiveKind, target: CMatrix, levels: usize) -> Result<Self> {
        if target.shape() != (4, 4) {
            return Err(dims("4x4 target", format!("{:?}", target.shape())));
        }
        if !target.is_unitary(1e-12) {
            return Err(invalid("target", "target gate must be unitary to 1e-12"));
        }
        Ok(Self {
            kind,
            target,
            isometry: SubspaceIsometry::new(levels)?,
        })
    }

    pub fn target(&self) -> &CMatrix {
        &self.target
    }

    pub fn isometry(&self) -> &SubspaceIsometry {
        &self.isometry
    }

    fn check_theta<'a>(&self, theta: Option<&'a [f64]>) -> Result<Option<(Functional, &'a [f64])>> {
        match (self.kind.functional(), theta) {
            (None, None) => Ok(None),
            (Some(f), Some(th)) => {
                f.check(th)?;
                Ok(Some((f, th)))
            }
            (None, Some(_)) => Err(invalid("theta", "G0 takes no ancillary angles")),
            (Some(_), None) => Err(invalid("theta", "G1/G2 need ancillary angles")),
        }
    }

    fn projected(&self, u: &CMatrix) -> Result<Matrix4<C64>> {
        let d = self.isometry.dim();
        if u.shape() != (d, d) {
            return Err(dims(format!("{d}x{d}"), format!("{:?}", u.shape())));
        }
        Ok(self.isometry.project_fixed(u))
    }

    /// Computational block `P† u P` of a device propagator.
    pub fn project(&self, u_device: &CMatrix) -> Result<CMatrix> {
        Ok(from_fixed4(&self.projected(u_device)?))
    }
}

/// Objective at fixed angles: `G0(U_T, F(θ, P† U P))`, or plain `G0` on the
/// projected gate for [`ObjectiveKind::G0`].
pub fn objective_value(objective: &Objective, u_device: &CMatrix, theta: Option<&[f64]>) -> Result<f64> {
    let spec = objective.check_theta(theta)?;
    let proj = objective.projected(u_device)?;
    let target_adj = to_fixed4(&objective.target).adjoint();
    Ok(match spec {
        None => g0_fixed(&target_adj, &proj),
        Some((f, th)) => g0_fixed(&target_adj, &f.apply_fixed(th, &proj)),
    })
}

/// `∂G/∂α` at fixed `θ` from a GOAT propagation.
///
/// The overlap is `s = Tr(W Ũ)`-linear in each occurrence of the projected
/// gate `Ũ`, so `∂ₖs = Tr(W ∂ₖŨ)` with `W` collecting the fixed factors, and
/// `∂ₖG = −(2/d²) Re(s̄ ∂ₖs)`.
pub fn objective_grad_alpha(objective: &Objective, goat: &GoatResult, theta: Option<&[f64]>) -> Result<Vec<f64>> {
    let spec = objective.check_theta(theta)?;
    if goat.du.is_empty() {
        return Err(Error::MissingDerivatives);
    }
    let u = objective.projected(&goat.u)?;
    let target_adj = to_fixed4(&objective.target).adjoint();
    let layer = |th: &[f64], i: usize| euler_layer_fixed(&th[i * LAYER_ANGLES..(i + 1) * LAYER_ANGLES]);

    // s = Tr(W Ũ) for the linear kinds; G2 gets the sum of both insertion points
    let (s, w) = match spec {
        None => (trace_product(&target_adj, &u), target_adj),
        Some((Functional::F1, th)) => {
            // Tr(U_T† R1 Ũ R2) = Tr(R2 U_T† R1 Ũ)
            let w = layer(th, 1) * target_adj * layer(th, 0);
            (trace_product(&w, &u), w)
        }
        Some((Functional::F2, th)) => {
            let (r1, r2, r3) = (layer(th, 0), layer(th, 1), layer(th, 2));
            let a = target_adj * r3;
            let tail = r2 * u * r1;
            let s = trace_product(&a, &(u * tail));
            // Tr(A ∂Ũ R2 Ũ R1) + Tr(A Ũ R2 ∂Ũ R1)
            let w = tail * a + r1 * a * u * r2;
            (s, w)
        }
    };
    let d2 = 16.0;
    goat.du
        .iter()
        .map(|du| {
            let dp = objective.projected(du)?;
            let ds = trace_product(&w, &dp);
            Ok(-(2.0 / d2) * (s.conj() * ds).re)
        })
        .collect()
}
