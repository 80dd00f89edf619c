//! Crate-wide error type.
//!
//! Variants are grouped so the CLI can map them onto its exit-code
//! contract: 2 for configuration problems, 3 for data/format problems,
//! 4 for I/O failures.

use std::path::PathBuf;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("{path}: failed to {op}: {source}")]
    IoPath {
        path: PathBuf,
        op: &'static str,
        source: std::io::Error,
    },

    #[error("{path}: bad magic {found:?}, expected P5 or P6")]
    BadMagic { path: PathBuf, found: String },

    #[error("{path}: malformed header: {detail}")]
    MalformedHeader { path: PathBuf, detail: String },

    #[error("{path}: unsupported maxval {maxval}, only 255 is supported")]
    UnsupportedMaxval { path: PathBuf, maxval: u64 },

    #[error("{path}: truncated pixel data: expected {expected} bytes, found {found}")]
    Truncated {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    /// Malformed binary container (weight file, feature cache, model file).
    #[error("bad {kind} file: {detail}")]
    BadFormat { kind: &'static str, detail: String },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    /// A pipeline stage needs an artifact that has not been produced yet.
    #[error("missing input: {0}")]
    MissingInput(String),
}

impl Error {
    pub fn io_path(path: impl Into<PathBuf>, op: &'static str, source: std::io::Error) -> Self {
        Error::IoPath {
            path: path.into(),
            op,
            source,
        }
    }

    pub fn bad_format(kind: &'static str, detail: impl Into<String>) -> Self {
        Error::BadFormat {
            kind,
            detail: detail.into(),
        }
    }

    /// Exit code for the CLI: 0 success, 2 config error, 3 data error, 4 I/O error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) | Error::IoPath { .. } => 4,
            Error::InvalidConfig(_) => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
