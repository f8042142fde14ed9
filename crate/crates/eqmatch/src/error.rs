use thiserror::Error;

/// Errors produced by lattice construction, matching, and the statistics harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("unsupported geometry: {0}")]
    UnsupportedGeometry(String),

    #[error("undecidable within generated region: {0}; enlarge the margin")]
    Undecidable(String),

    #[error("out of range: {0}")]
    Range(String),

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("internal consistency violation: {0}")]
    InternalConsistency(String),

    #[error("mass transport contract violation: {0}")]
    ContractViolation(String),

    #[error("malformed data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
