use thiserror::Error;

use crate::measurement::{Arm, Branch};

/// Errors raised by the simulator and the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("site {site} outside window [{min}, {max}]")]
    OutOfWindow { site: i64, min: i64, max: i64 },

    #[error("window overflow: amplitude would move to site {site}, outside [{min}, {max}]")]
    WindowOverflow { site: i64, min: i64, max: i64 },

    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("conditioning on branch {branch:?} is undefined (probability {probability:e})")]
    UndefinedConditioning { branch: Branch, probability: f64 },

    #[error("invalid protocol: {0}")]
    ProtocolInvalid(String),

    #[error("distribution is not normalized (total {0})")]
    Unnormalized(f64),

    #[error("arm probabilities sum to {0}, expected 1")]
    ProbabilityMismatch(f64),

    #[error("trajectory enumeration limited to 24 steps, got {0}")]
    TooManySteps(usize),

    #[error("invalid counts: {0}")]
    InvalidCounts(String),

    #[error("no events recorded for arm {0:?}")]
    EmptyArm(Arm),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for errors caused by bad input (configuration, arguments, files)
    /// rather than by a failure while running.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;

/// Checks that `value` is a probability.
pub(crate) fn check_unit(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("{value} is not in [0, 1]")))
    }
}
