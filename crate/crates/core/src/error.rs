use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    Dimension { expected: String, found: String },

    #[error("index {index} out of range (length {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("time {t} ns outside control window [0, {duration}] ns")]
    TimeOutOfRange { t: f64, duration: f64 },

    #[error("integration failed at t = {t} ns after {steps} steps (h = {step_size:e}): {reason}")]
    Integration {
        t: f64,
        steps: usize,
        step_size: f64,
        reason: String,
    },

    #[error("missing derivative stack")]
    MissingDerivatives,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

pub(crate) fn dims(expected: impl Into<String>, found: impl Into<String>) -> Error {
    Error::Dimension {
        expected: expected.into(),
        found: found.into(),
    }
}
