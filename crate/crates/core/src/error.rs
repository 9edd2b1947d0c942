use thiserror::Error;

use crate::coxph::IterationRecord;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input outside the mathematical domain of an operation (negative time, u outside (0,1)).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("invalid weight {weight} for subject {subject} at time {time}")]
    Weight { subject: String, time: f64, weight: f64 },

    #[error("Cox fit did not converge after {} iterations (max |score| = {max_score:e})", trace.len())]
    NonConvergence { max_score: f64, trace: Vec<IterationRecord> },

    /// Monotone likelihood: the maximizer is at infinity for at least one coefficient.
    #[error("monotone likelihood for coefficient '{name}' (|beta| = {value:.3}, bound {bound})")]
    Separation { name: String, value: f64, bound: f64 },

    #[error("replicate {index}: {source}")]
    Replicate {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    /// Malformed configuration or input file. `key` names the offending key, column or line.
    #[error("parse error at '{key}': {message}")]
    Parse { key: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn parse(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            key: key.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by malformed user input rather than runtime failure.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::Parse { .. })
    }
}
