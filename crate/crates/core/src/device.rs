//! Two-transmon Hamiltonian in the truncated `levels ⊗ levels` space.

use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::error::{dims, invalid, Result};
use crate::matrix::{kron, CMatrix, C64};
use crate::pulse::{control_field, control_field_grad, ControlVector, PulseShape};

/// Which transmon the control field couples to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriveTarget {
    #[default]
    Transmon1,
    Transmon2,
}

/// Fixed-frequency transmon pair with always-on exchange coupling.
/// All rates in rad/ns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceModel {
    pub omega1: f64,
    pub omega2: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub coupling: f64,
    pub levels: usize,
    pub drive: DriveTarget,
}

impl DeviceModel {
    /// Reference hardware: 5.114 / 4.914 GHz qubits, −330 MHz
    /// anharmonicities, 3.8 MHz coupling, three levels each.
    pub fn table1() -> Self {
        Self {
            omega1: TAU * 5.114,
            omega2: TAU * 4.914,
            delta1: TAU * -0.330,
            delta2: TAU * -0.330,
            coupling: TAU * 0.0038,
            levels: 3,
            drive: DriveTarget::Transmon1,
        }
    }

    pub fn dim(&self) -> usize {
        self.levels * self.levels
    }

    /// Checks hard invariants; returns soft warnings (e.g. a positive
    /// anharmonicity, which is legal but not transmon-like).
    pub fn validate(&self) -> Result<Vec<String>> {
        if self.levels < 2 {
            return Err(invalid("levels", format!("need at least 2, got {}", self.levels)));
        }
        if !(self.coupling >= 0.0) {
            return Err(invalid(
                "coupling",
                format!("must be non-negative, got {}", self.coupling),
            ));
        }
        for (name, v) in [
            ("omega1", self.omega1),
            ("omega2", self.omega2),
            ("delta1", self.delta1),
            ("delta2", self.delta2),
        ] {
            if !v.is_finite() {
                return Err(invalid(name, "must be finite"));
            }
        }
        let mut warnings = Vec::new();
        for (name, v) in [("delta1", self.delta1), ("delta2", self.delta2)] {
            if v > 0.0 {
                warnings.push(format!(
                    "{name} = {v} rad/ns is positive; transmons have negative anharmonicity"
                ));
            }
        }
        Ok(warnings)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct SparseEntry {
    pub row: usize,
    pub col: usize,
    pub drift: f64,
    pub drive: f64,
}

/// Drift and drive operators of the device.
///
/// The propagators only ever see the merged sparsity pattern of the drift
/// and the driven operator; both are real symmetric.
#[derive(Debug, Clone)]
pub struct HamiltonianTerms {
    drift: CMatrix,
    control1: CMatrix,
    control2: CMatrix,
    drive: DriveTarget,
    pattern: Vec<SparseEntry>,
}

fn ladder(levels: usize) -> CMatrix {
    CMatrix::from_fn(levels, levels, |i, j| {
        if j == i + 1 {
            C64::new((j as f64).sqrt(), 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

fn real_scale(m: &CMatrix, s: f64) -> CMatrix {
    m.scale(C64::new(s, 0.0))
}

/// Assembles drift and drive operators for `model`.
pub fn build_terms(model: &DeviceModel) -> Result<HamiltonianTerms> {
    model.validate()?;
    let l = model.levels;
    let id = CMatrix::identity(l);
    let a = ladder(l);
    let ad = a.adjoint();
    let n = &ad * &a;
    let nm1 = n.clone() - id.clone();
    let anh = &n * &nm1;

    let a1 = kron(&a, &id);
    let a2 = kron(&id, &a);
    let drift = real_scale(&kron(&n, &id), model.omega1)
        + real_scale(&kron(&anh, &id), model.delta1 / 2.0)
        + real_scale(&kron(&id, &n), model.omega2)
        + real_scale(&kron(&id, &anh), model.delta2 / 2.0)
        + real_scale(&(&a1.adjoint() * &a2 + &a1 * &a2.adjoint()), model.coupling);

    let control1 = a1.adjoint() + a1;
    let control2 = a2.adjoint() + a2;
    HamiltonianTerms::assemble(drift, control1, control2, model.drive)
}

impl HamiltonianTerms {
    /// Terms for an arbitrary real symmetric drift driven through `drive_op`.
    /// Used for reduced test models (e.g. a driven two-level system).
    pub fn from_operators(drift: CMatrix, drive_op: CMatrix) -> Result<Self> {
        if !drift.is_square() || drift.shape() != drive_op.shape() {
            return Err(dims(
                format!("square {:?}", drift.shape()),
                format!("{:?}", drive_op.shape()),
            ));
        }
        let zero = CMatrix::zeros(drift.rows(), drift.cols());
        Self::assemble(drift, drive_op, zero, DriveTarget::Transmon1)
    }

    fn assemble(drift: CMatrix, control1: CMatrix, control2: CMatrix, drive: DriveTarget) -> Result<Self> {
        let driven = match drive {
            DriveTarget::Transmon1 => &control1,
            DriveTarget::Transmon2 => &control2,
        };
        let d = drift.rows();
        let mut pattern = Vec::new();
        for i in 0..d {
            for j in 0..d {
                let h = drift.get(i, j);
                let c = driven.get(i, j);
                if h.im != 0.0 || c.im != 0.0 || h != drift.get(j, i) || c != driven.get(j, i) {
                    return Err(invalid("hamiltonian", "drift and drive must be real symmetric"));
                }
                if h.re != 0.0 || c.re != 0.0 {
                    pattern.push(SparseEntry {
                        row: i,
                        col: j,
                        drift: h.re,
                        drive: c.re,
                    });
                }
            }
        }
        Ok(Self {
            drift,
            control1,
            control2,
            drive,
            pattern,
        })
    }

    pub fn dim(&self) -> usize {
        self.drift.rows()
    }

    pub fn drift(&self) -> &CMatrix {
        &self.drift
    }

    /// `a₁† + a₁`.
    pub fn control1(&self) -> &CMatrix {
        &self.control1
    }

    /// `a₂† + a₂`.
    pub fn control2(&self) -> &CMatrix {
        &self.control2
    }

    pub fn drive_target(&self) -> DriveTarget {
        self.drive
    }

    /// The operator the control field multiplies.
    pub fn driven_operator(&self) -> &CMatrix {
        match self.drive {
            DriveTarget::Transmon1 => &self.control1,
            DriveTarget::Transmon2 => &self.control2,
        }
    }

    pub(crate) fn pattern(&self) -> &[SparseEntry] {
        &self.pattern
    }

    /// `H0 + γ C` for an explicit field value.
    pub fn with_field(&self, gamma: f64) -> CMatrix {
        self.drift.clone() + self.driven_operator().scale(C64::new(gamma, 0.0))
    }
}

/// `H(α, t) = H0 + γ(α, t) C`.
pub fn hamiltonian_at(terms: &HamiltonianTerms, alpha: &ControlVector, t: f64, shape: &PulseShape) -> CMatrix {
    terms.with_field(control_field(alpha, t, shape))
}

/// `∂H/∂α_k = (∂γ/∂α_k) C`.
pub fn hamiltonian_grad_at(
    terms: &HamiltonianTerms,
    alpha: &ControlVector,
    t: f64,
    shape: &PulseShape,
    k: usize,
) -> Result<CMatrix> {
    let g = control_field_grad(alpha, t, shape, k)?;
    Ok(terms.driven_operator().scale(C64::new(g, 0.0)))
}
