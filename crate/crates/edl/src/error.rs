//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Tensor or vector dimensions do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A value that must stay finite became NaN or infinite.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// An IDX file carried an unexpected magic number.
    #[error("{path}: bad IDX magic at byte {offset}: found 0x{found:08x}, expected 0x{expected:08x}")]
    IdxBadMagic {
        path: String,
        offset: usize,
        found: u32,
        expected: u32,
    },

    /// An IDX file ended before the declared payload.
    #[error("{path}: truncated IDX file at byte {offset}: needed {needed} more bytes")]
    IdxTruncated {
        path: String,
        offset: usize,
        needed: usize,
    },

    /// Image and label files disagree on the sample count.
    #[error("IDX count mismatch: {images} images vs {labels} labels")]
    IdxCountMismatch { images: usize, labels: usize },

    /// Invalid configuration value.
    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
