//! Pulse-level discovery of two-qubit entangling gates on a pair of
//! fixed-frequency transmons.
//!
//! The crate is organised bottom-up:
//!
//! - [`matrix`], [`gates`], [`subspace`]: dense complex algebra, the gate
//!   library and the qubit ↔ transmon embedding;
//! - [`pulse`]: the analytic sinusoidal pulse ansatz and its derivatives;
//! - [`device`]: the two-transmon Hamiltonian;
//! - [`ode`], [`propagate`]: lab-frame propagation with GOAT sensitivities;
//! - [`objectives`]: infidelity, infidelity up to local rotations, and the
//!   echoed-pulse infidelity, with their gradients;
//! - [`optimize`]: L-BFGS, Nelder–Mead and the alternating control loop.

// `!(x > 0.0)` is used on purpose to reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod device;
pub mod error;
pub mod gates;
pub mod matrix;
pub mod objectives;
pub mod ode;
pub mod optimize;
pub mod propagate;
pub mod pulse;
pub mod subspace;

pub use device::{build_terms, hamiltonian_at, hamiltonian_grad_at, DeviceModel, DriveTarget, HamiltonianTerms};
pub use error::{Error, Result};
pub use matrix::{kron, CMatrix, C64};
pub use objectives::{
    functional_f1, functional_f2, infidelity_g0, minimize_theta, objective_grad_alpha, objective_value, EnsembleConfig,
    Functional, Objective, ObjectiveKind, ThetaFit,
};
pub use ode::{Frame, IntegratorConfig, SolveStats};
pub use optimize::{
    alternating_optimize, ControlProblem, ConvergenceTrace, OptResult, OptimizerConfig, TerminationReason, TraceEvent,
};
pub use propagate::{propagate_goat, propagate_state, propagate_unitary, GoatResult, Trajectory};
pub use pulse::{control_field, dressed_frequency, ControlVector, PulseShape, Saturation};
pub use subspace::{project_gate, SubspaceIsometry};
