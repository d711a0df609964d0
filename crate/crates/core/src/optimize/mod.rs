//! Optimizers: L-BFGS over pulse parameters, Nelder–Mead over ancillary
//! angles, and the loop alternating between them.

mod alternating;
pub mod lbfgs;
pub mod nelder_mead;

pub use alternating::{
    alternating_optimize, initial_alpha, ControlProblem, ConvergenceTrace, IterationRecord, OptResult, OptimizerConfig,
    RefreshRecord, TerminationReason, TraceEvent,
};
pub use lbfgs::{lbfgs_minimize, LbfgsConfig, LbfgsResult, LbfgsStop};
pub use nelder_mead::{nelder_mead_minimize, NelderMeadConfig, NelderMeadResult};
