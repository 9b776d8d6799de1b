use thiserror::Error;

use crate::types::ExpertId;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    /// A learner read the loss of an expert it did not query for the day.
    #[error("query-model violation: loss of expert {0} read without querying it")]
    QueryModel(ExpertId),

    #[error("space-model violation: {0}")]
    SpaceModel(String),

    #[error("interval [{lo}, {hi}) is outside the stream horizon {horizon}")]
    Range { lo: u64, hi: u64, horizon: u64 },

    #[error("stream exhausted: day {day} requested but the horizon is {horizon}")]
    Horizon { day: u64, horizon: u64 },

    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },

    #[error("loss {value} at row {row}, column {col} is outside [0, 1]")]
    LossRange { row: u64, col: usize, value: f64 },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("trace mismatch: {0}")]
    Trace(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
