use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty votes: total vote count is zero")]
    EmptyVotes,

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("item `{0}` has an all-zero feature vector and cannot be L2-normalized")]
    ZeroFeature(String),

    #[error("need at least {needed} items, got {actual}")]
    TooFewItems { needed: usize, actual: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("shape mismatch at layer {layer}: expected {expected}, got {actual}")]
    Shape {
        layer: usize,
        expected: String,
        actual: String,
    },

    #[error("stale forward cache: {0}")]
    StaleCache(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error("non-finite loss on pair {first} / {second} (epoch {epoch})")]
    NonFiniteLoss {
        first: String,
        second: String,
        epoch: usize,
    },

    #[error("labels contain a single class; ROC needs both positives and negatives")]
    SingleClass,

    #[error("index {index} out of range for length {len}")]
    OutOfRange { index: usize, len: usize },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
