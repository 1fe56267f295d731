use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the analysis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("trace is empty: {0}")]
    EmptyTrace(&'static str),

    #[error("degenerate trace: only {populated} of {required} angular bins populated")]
    DegenerateTrace { populated: usize, required: usize },

    #[error("feature `{feature}` has zero variance over the training rows")]
    ZeroVariance { feature: &'static str },

    #[error("both classes must be present: {0}")]
    SingleClass(String),

    #[error("{}: row {row}: {message}", path.display())]
    Load {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("corrupt model artifact: {0}")]
    CorruptArtifact(String),

    #[error("unsupported artifact version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("artifact validation failed: {0}")]
    Validation(String),

    #[error("image decode failed: {0}")]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
