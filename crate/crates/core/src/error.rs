use thiserror::Error;

/// Crate-wide error type. Variants mirror the failure classes of the public
/// API surface so callers (and the CLI) can report a one-line diagnostic.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid range: {0}")]
    InvalidRange(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("label error: {0}")]
    Label(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("bounds error: {0}")]
    Bounds(String),
    #[error("layout error: {0}")]
    Layout(String),
    #[error("metric error: {0}")]
    Metric(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("empty dataset: {0}")]
    EmptyDataset(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
