use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum MfnError {
    #[error("format error: {0}")]
    Format(String),
    #[error("consistency error: {0}")]
    Consistency(String),
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("matrix is singular to working precision (pivot {pivot:e} at column {column})")]
    SingularMatrix { column: usize, pivot: f64 },
    #[error("pivot breakdown at block {block}: |pivot| = {magnitude:e} below {tolerance:e}")]
    PivotBreakdown {
        block: usize,
        magnitude: f64,
        tolerance: f64,
    },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("backend {0} does not support this operation")]
    UnsupportedBackend(String),
    #[error("internal error: {0}")]
    Internal(String),
    #[error("non-finite loss at epoch {epoch}: {diagnostics}")]
    NonFiniteLoss { epoch: usize, diagnostics: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, MfnError>;

pub(crate) fn shape(msg: impl Into<String>) -> MfnError {
    MfnError::Shape(msg.into())
}
