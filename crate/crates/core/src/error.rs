use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    /// Malformed input data (bad magic, out-of-range byte, truncated payload).
    #[error("format: {0}")]
    Format(String),
    /// Tensor/layer/image shape disagreement.
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    /// Problem too large for an exact method or a fixed hardware graph.
    #[error("capacity: {0}")]
    Capacity(String),
    #[error("training diverged at epoch {epoch}: {message}")]
    Training { epoch: usize, message: String },
    #[error("numeric: {0}")]
    Numeric(String),
    #[error("unsupported backend: {0}")]
    UnsupportedBackend(String),
}

pub type Result<T> = std::result::Result<T, Error>;
