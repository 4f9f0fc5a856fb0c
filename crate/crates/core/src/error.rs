use thiserror::Error;

/// Errors produced anywhere in the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid chromaticity: {0}")]
    InvalidChromaticity(String),
    #[error("estimate component {value} is below the reproduction-error floor")]
    DegenerateEstimate { value: f64 },
    #[error("empty input set")]
    EmptySet,
    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid cross-validation plan: {0}")]
    InvalidPlan(String),
    #[error("image has no usable pixels")]
    EmptyImage,
    #[error("image decode failed: {0}")]
    Image(String),
    #[error("malformed data: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
