use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: schema violation in record {record:?}: {message}")]
    Schema {
        line: usize,
        record: Option<String>,
        message: String,
    },

    #[error("record {record:?}: field `{field}` has dimension {found}, expected {expected}")]
    DimensionMismatch {
        record: String,
        field: String,
        expected: usize,
        found: usize,
    },

    #[error("duplicate document id {0:?}")]
    DuplicateId(String),

    #[error("record {record:?}: field `{field}` contains a non-finite value")]
    NonFinite { record: String, field: String },

    #[error("cosine similarity is undefined for a zero vector")]
    ZeroVector,

    #[error("vector length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("label rate {rate} yields {labeled} labeled documents for {classes} classes")]
    InsufficientLabels {
        rate: f64,
        labeled: usize,
        classes: usize,
    },

    #[error("classifier needs at least two classes, found {0}")]
    SingleClass(usize),

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Divergence { epoch: usize, loss: f64 },

    #[error("non-finite value encountered: {0}")]
    NonFiniteValue(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
