use thiserror::Error;

/// Errors produced anywhere in the adaptation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("input too short: {0}")]
    InputTooShort(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("mask [{start}, {end}) out of range for axis of length {len}")]
    MaskRange { start: usize, end: usize, len: usize },

    #[error("token sequence of length {len} exceeds maximum {max}")]
    Length { len: usize, max: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("pretraining reached {accuracy:.3} held-out accuracy after {epochs} epochs (needs {target:.2})")]
    PretrainDivergence { accuracy: f64, epochs: usize, target: f64 },

    #[error("schema version mismatch: expected {expected}, found {found}")]
    Schema { expected: u32, found: u32 },

    #[error("artifact mismatch: {0}")]
    ArtifactMismatch(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
