use thiserror::Error;

use crate::solver::IterateState;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("no closed-form oracle for `{0}` on this problem")]
    OracleUnavailable(&'static str),

    #[error("gradient of the probability is undefined at {0:?}")]
    GradientUndefined(Vec<f64>),

    #[error("iteration diverged at k = {k}")]
    Divergence { k: usize, state: Box<IterateState> },

    #[error("convergence conditions violated: {0}")]
    ConditionsViolated(String),

    #[error("{0}")]
    Numerical(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
