use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("{op}: {msg}")]
    InvalidShape { op: &'static str, msg: String },

    #[error("gradient error: {0}")]
    Grad(String),

    #[error("non-finite gradient for parameter `{param}` at step {step}")]
    NonFiniteGradient { param: String, step: u64 },

    #[error("non-finite {what} at step {step}")]
    NonFiniteLoss { what: &'static str, step: u64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("model: {0}")]
    Model(String),

    #[error("{}:{line}: {msg}", file.display())]
    Config {
        file: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("data: {0}")]
    Data(String),

    #[error("format: {0}")]
    Format(String),

    #[error("integrity check failed: {0}")]
    Integrity(String),

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u16, expected: u16 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::ShapeMismatch {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }

    pub(crate) fn invalid_shape(op: &'static str, msg: impl Into<String>) -> Self {
        Error::InvalidShape {
            op,
            msg: msg.into(),
        }
    }
}
