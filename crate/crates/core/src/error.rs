use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("topology error: {0}")]
    Topology(String),

    #[error("invalid instance: {0}")]
    Instance(String),

    #[error("instance too large for exhaustive search: {pairs} pairs (limit {limit})")]
    TooLarge { pairs: usize, limit: usize },

    #[error("linear program: {0}")]
    Lp(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("trace line {line}: {message}")]
    Trace { line: usize, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("unsupported schema version {found:?} (expected {expected:?})")]
    Version { found: String, expected: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
