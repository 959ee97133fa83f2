use thiserror::Error;

/// Errors surfaced by every module of the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unknown name `{0}`")]
    UnknownName(String),
    #[error("structural error: {0}")]
    Structural(String),
    #[error("consistency check failed: {0}")]
    Consistency(String),
    #[error("register layout mismatch: {0}")]
    LayoutMismatch(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("state has zero norm")]
    ZeroNorm,
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("resource guard: {0}")]
    ResourceGuard(String),
    #[error("unimplemented: {0}")]
    Unimplemented(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
