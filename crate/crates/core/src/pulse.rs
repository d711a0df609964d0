//! The analytic control field.
//!
//! A pulse is a sum of `N` sinusoids pushed through a saturating limiter,
//! shaped by a flat-top cosine window and multiplied onto a carrier at the
//! dressed frequency of transmon 2:
//!
//! ```text
//! γ(α, t) = s · ε(t) · cos(ω̄ t) · S(Σ_n a_n sin(ν_n t + φ_n))
//! ```
//!
//! Units are rad/ns for every rate and ns for time. `s` is the
//! `drive_scale` knob (1 by default).

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::device::DeviceModel;
use crate::error::{invalid, Error, Result};

/// Flat pulse parameter vector: `N` triples `(amplitude, frequency, phase)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ControlVector(Vec<f64>);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamRole {
    Amplitude,
    Frequency,
    Phase,
}

impl ControlVector {
    pub fn new(params: Vec<f64>) -> Result<Self> {
        if params.is_empty() || !params.len().is_multiple_of(3) {
            return Err(invalid(
                "alpha",
                format!("length must be a positive multiple of 3, got {}", params.len()),
            ));
        }
        if let Some(k) = params.iter().position(|x| !x.is_finite()) {
            return Err(invalid("alpha", format!("entry {k} is not finite")));
        }
        Ok(Self(params))
    }

    pub fn zeros(n_terms: usize) -> Self {
        Self(vec![0.0; 3 * n_terms.max(1)])
    }

    pub fn from_triples(triples: &[(f64, f64, f64)]) -> Result<Self> {
        Self::new(triples.iter().flat_map(|&(a, w, p)| [a, w, p]).collect())
    }

    pub fn n_terms(&self) -> usize {
        self.0.len() / 3
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn amplitude(&self, n: usize) -> f64 {
        self.0[3 * n]
    }

    pub fn frequency(&self, n: usize) -> f64 {
        self.0[3 * n + 1]
    }

    pub fn phase(&self, n: usize) -> f64 {
        self.0[3 * n + 2]
    }

    pub fn role(k: usize) -> ParamRole {
        match k % 3 {
            0 => ParamRole::Amplitude,
            1 => ParamRole::Frequency,
            _ => ParamRole::Phase,
        }
    }

    /// Short label such as `amp[3]`, used in reports.
    pub fn param_label(k: usize) -> String {
        let role = match Self::role(k) {
            ParamRole::Amplitude => "amp",
            ParamRole::Frequency => "freq",
            ParamRole::Phase => "phase",
        };
        format!("{role}[{}]", k / 3)
    }

    /// Copy with entry `k` shifted by `delta`.
    pub fn shifted(&self, k: usize, delta: f64) -> Self {
        let mut v = self.0.clone();
        v[k] += delta;
        Self(v)
    }
}

/// Amplitude limiter variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Saturation {
    /// Centered logistic `-B + 2B / (1 + exp(-g f / B))`, range `(-B, B)`.
    #[default]
    Logistic,
    /// `-B - 2B / (1 - 3 exp(-g f / B))`. It has a pole at `f = (B/g) ln 3`,
    /// is increasing on either side, maps `f` below the pole into `(-B, ∞)`
    /// with `S(0) = 0` and `f` above it into `(-∞, -3B)`. Only useful for
    /// side-by-side comparisons.
    Rational,
}

/// Shape of the control envelope, in internal units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseShape {
    /// Saturation bound `B` (rad/ns).
    pub saturation_bound: f64,
    /// Limiter gain `g`.
    pub gain: f64,
    /// Flat-top window height `ε_m` (rad/ns).
    pub window_height: f64,
    /// Ramp time as a fraction of the duration.
    pub ramp_fraction: f64,
    /// Control time `T_c` (ns).
    pub duration: f64,
    /// Carrier angular frequency (rad/ns).
    pub carrier_freq: f64,
    pub saturation: Saturation,
    /// Overall multiplier on the field.
    pub drive_scale: f64,
}

impl PulseShape {
    /// Reference envelope settings with the carrier on the dressed qubit-2
    /// frequency of `model`.
    pub fn table1(duration: f64, model: &DeviceModel) -> Result<Self> {
        Ok(Self {
            saturation_bound: TAU * 0.08,
            gain: 4.0,
            window_height: TAU * 0.03,
            ramp_fraction: 0.3,
            duration,
            carrier_freq: dressed_frequency(model)?,
            saturation: Saturation::Logistic,
            drive_scale: 1.0,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("saturation_bound", self.saturation_bound),
            ("gain", self.gain),
            ("window_height", self.window_height),
            ("duration", self.duration),
            ("carrier_freq", self.carrier_freq),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(name, format!("must be positive, got {v}")));
            }
        }
        if !(self.ramp_fraction > 0.0 && self.ramp_fraction <= 0.5) {
            return Err(invalid(
                "ramp_fraction",
                format!("must lie in (0, 0.5], got {}", self.ramp_fraction),
            ));
        }
        if !self.drive_scale.is_finite() {
            return Err(invalid("drive_scale", "must be finite"));
        }
        Ok(())
    }

    pub fn ramp_time(&self) -> f64 {
        self.ramp_fraction * self.duration
    }
}

/// `Σ_n a_n sin(ν_n t + φ_n)`.
pub fn basis_sum(alpha: &ControlVector, t: f64) -> f64 {
    alpha
        .as_slice()
        .chunks_exact(3)
        .map(|p| p[0] * (p[1] * t + p[2]).sin())
        .sum()
}

/// Amplitude limiter `S(f)`.
pub fn saturate(f: f64, shape: &PulseShape) -> f64 {
    let b = shape.saturation_bound;
    let x = shape.gain * f / b;
    match shape.saturation {
        // -B + 2B/(1 + e^{-x}) rewritten as B tanh(x/2), which does not
        // overflow for large |x|.
        Saturation::Logistic => b * (0.5 * x).tanh(),
        Saturation::Rational => -b - 2.0 * b / (1.0 - 3.0 * (-x).exp()),
    }
}

/// `dS/df`.
pub fn saturate_slope(f: f64, shape: &PulseShape) -> f64 {
    let b = shape.saturation_bound;
    let g = shape.gain;
    let x = g * f / b;
    match shape.saturation {
        Saturation::Logistic => {
            let th = (0.5 * x).tanh();
            0.5 * g * (1.0 - th * th)
        }
        Saturation::Rational => {
            let e = (-x).exp();
            let den = 1.0 - 3.0 * e;
            6.0 * g * e / (den * den)
        }
    }
}

/// Flat-top cosine window `ε(t)`.
pub fn window(t: f64, shape: &PulseShape) -> Result<f64> {
    if !(0.0..=shape.duration).contains(&t) {
        return Err(Error::TimeOutOfRange {
            t,
            duration: shape.duration,
        });
    }
    Ok(window_clamped(t, shape))
}

/// Window evaluated with `t` clamped into `[0, T_c]`.
pub(crate) fn window_clamped(t: f64, shape: &PulseShape) -> f64 {
    let tc = shape.duration;
    let tr = shape.ramp_time();
    let em = shape.window_height;
    let t = t.clamp(0.0, tc);
    if t <= tr {
        0.5 * (1.0 - (std::f64::consts::PI * t / tr).cos()) * em
    } else if t <= tc - tr {
        em
    } else {
        0.5 * (1.0 - (std::f64::consts::PI * (tc - t) / tr).cos()) * em
    }
}

fn envelope(t: f64, shape: &PulseShape) -> f64 {
    shape.drive_scale * window_clamped(t, shape) * (shape.carrier_freq * t).cos()
}

/// `γ(α, t)`; zero outside `[0, T_c]`.
pub fn control_field(alpha: &ControlVector, t: f64, shape: &PulseShape) -> f64 {
    if !(0.0..=shape.duration).contains(&t) {
        return 0.0;
    }
    envelope(t, shape) * saturate(basis_sum(alpha, t), shape)
}

/// `∂γ/∂α_k`.
pub fn control_field_grad(alpha: &ControlVector, t: f64, shape: &PulseShape, k: usize) -> Result<f64> {
    if k >= alpha.len() {
        return Err(Error::IndexOutOfRange {
            index: k,
            len: alpha.len(),
        });
    }
    let mut grad = vec![0.0; alpha.len()];
    control_field_with_grad(alpha, t, shape, &mut grad);
    Ok(grad[k])
}

/// Field value and the full gradient `∂γ/∂α` in one pass.
pub fn control_field_with_grad(alpha: &ControlVector, t: f64, shape: &PulseShape, grad: &mut [f64]) -> f64 {
    debug_assert_eq!(grad.len(), alpha.len());
    if !(0.0..=shape.duration).contains(&t) {
        grad.fill(0.0);
        return 0.0;
    }
    let env = envelope(t, shape);
    let f = basis_sum(alpha, t);
    let outer = env * saturate_slope(f, shape);
    for (p, g) in alpha.as_slice().chunks_exact(3).zip(grad.chunks_exact_mut(3)) {
        let (s, c) = (p[1] * t + p[2]).sin_cos();
        g[0] = outer * s;
        g[1] = outer * p[0] * t * c;
        g[2] = outer * p[0] * c;
    }
    env * saturate(f, shape)
}

/// Coupling-dressed transition frequency of transmon 2,
/// `ω₂ − J² / (ω₁ − ω₂)`.
pub fn dressed_frequency(model: &DeviceModel) -> Result<f64> {
    let detuning = model.omega1 - model.omega2;
    if detuning == 0.0 {
        return Err(invalid("omega1/omega2", "degenerate transmon frequencies"));
    }
    Ok(model.omega2 - model.coupling * model.coupling / detuning)
}
