//! Error type shared by the toolkit.

/// Errors produced by the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("degenerate quaternion mean: aligned average norm {norm:.3e} is below 1e-12")]
    DegenerateMean { norm: f64 },

    #[error("matrix is not symmetric positive-definite")]
    NotPositiveDefinite,

    #[error("non-positive scale: {name}[{index}] = {value}")]
    NonPositiveScale {
        name: &'static str,
        index: usize,
        value: f64,
    },

    #[error("dimension mismatch for {name}: expected {expected}, got {got}")]
    DimensionMismatch {
        name: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid field `{field}`: {reason}")]
    InvalidField { field: String, reason: String },

    #[error("line {line}: {message}")]
    MalformedLine { line: usize, message: String },

    #[error("prediction/ground-truth id mismatch; missing: {}", missing.join(", "))]
    IdMismatch { missing: Vec<String> },

    #[error("too few samples: need at least {need}, got {got}")]
    TooFewSamples { need: usize, got: usize },

    #[error("optimization diverged at step {step}: loss {loss:.3e}")]
    Diverged { step: usize, loss: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
