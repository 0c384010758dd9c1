use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("index {index} out of range for a table of {len} weights")]
    OutOfRange { index: usize, len: usize },

    #[error("weights are not non-decreasing: lambda_{index} = {value} < lambda_{prev_index} = {prev}")]
    NotMonotone {
        index: usize,
        value: f64,
        prev_index: usize,
        prev: f64,
    },

    #[error("recurrence broke down at k = {index} before reaching N = {target}")]
    EarlyBreakdown { index: usize, target: usize },

    #[error("{method} did not converge within {iterations} iterations")]
    NotConverged { method: &'static str, iterations: usize },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("section length {n} exceeds the dense oracle cap of {cap}")]
    OracleCap { n: usize, cap: usize },

    #[error("mu = {mu} is not below the limit constant {limit}")]
    AboveLimit { mu: f64, limit: f64 },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Whether the error reflects bad user input rather than a numerical failure.
    pub fn is_input_error(&self) -> bool {
        !matches!(
            self,
            Error::NotConverged { .. } | Error::NonFinite(_) | Error::EarlyBreakdown { .. }
        )
    }
}
