use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate covariance: {0}")]
    DegenerateCovariance(String),

    #[error("degenerate position: camera-space distance {0:e} is too small")]
    DegeneratePosition(f64),

    /// Binary format error; `offset` is the byte offset where reading failed.
    #[error("format error in {section} at byte {offset}: {message}")]
    Format {
        section: &'static str,
        offset: u64,
        message: String,
    },

    /// Text format error with a 1-based line number.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("non-finite gradient for attribute `{attribute}` at pixel ({x}, {y}) of view {view}")]
    NanGradient {
        attribute: &'static str,
        view: usize,
        x: usize,
        y: usize,
    },

    #[error("missing input {path}: {hint}")]
    MissingInput { path: PathBuf, hint: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("image encoding: {0}")]
    Image(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
