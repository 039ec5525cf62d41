use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("dimensions {h}x{w} are not divisible by {factor}")]
    Divisibility { h: usize, w: usize, factor: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed header in {path}: {reason}")]
    MalformedHeader { path: PathBuf, reason: String },

    #[error("unsupported format version {found} in {path} (expected {expected})")]
    UnsupportedVersion {
        path: PathBuf,
        found: u32,
        expected: u32,
    },

    #[error("truncated file {path}: need {expected} bytes, found {found}")]
    Truncated {
        path: PathBuf,
        expected: u64,
        found: u64,
    },

    #[error("inconsistent metadata: {0}")]
    Metadata(String),

    #[error("weight fingerprint mismatch: file has {found}, configuration expects {expected}")]
    Fingerprint { expected: String, found: String },

    #[error("non-finite value at training step {step}: {what}")]
    NonFinite { step: u64, what: String },

    #[error("timestamps out of order: {0}")]
    Order(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
