use thiserror::Error;

/// Errors raised by the solvers, simulator and exporters.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParam { field: &'static str, reason: String },

    #[error("integration diverged at t={time}: coordinate {index} ({label}) is {value}")]
    Divergence {
        time: f64,
        index: usize,
        label: String,
        value: f64,
    },

    #[error("bisection bracket failure: {0}")]
    Bracket(String),

    #[error("series did not converge within {terms} terms")]
    SeriesNonConvergence { terms: usize },

    #[error("linear solve failed: {0}")]
    Solve(String),

    #[error("state space too large: {0}")]
    StateSpace(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn param(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParam {
            field,
            reason: reason.into(),
        }
    }

    /// Name of the offending field for validation errors.
    pub fn field(&self) -> Option<&'static str> {
        match self {
            Error::InvalidParam { field, .. } => Some(field),
            _ => None,
        }
    }
}
