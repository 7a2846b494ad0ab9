use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("architecture constraint violated: {0}")]
    SpecViolation(String),
    #[error("incompatible weights: {0}")]
    IncompatibleWeights(String),
    #[error("corrupt file: {0}")]
    CorruptFile(String),
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    #[error("invalid route: {0}")]
    InvalidRoute(String),
    #[error("pose outside world extent: {0}")]
    OutOfWorld(String),
    #[error("oracle left the road corridor: {0}")]
    OracleOffRoad(String),
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("stale cache entry: {0}")]
    StaleCache(String),
    #[error("parse error at record {index}: {message}")]
    Parse { index: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Exit code the CLI maps this error to: 2 for data/validation
    /// problems, matching the documented command contract.
    pub fn exit_code(&self) -> i32 {
        2
    }
}
