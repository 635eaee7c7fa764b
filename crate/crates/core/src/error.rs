// SPDX-License-Identifier: Apache-2.0

//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model config: {0}")]
    Config(String),

    #[error("shape mismatch for {name}: expected {expected:?}, found {found:?}")]
    Shape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("token id {token} at position {position} out of range (vocab_size {vocab_size})")]
    TokenOutOfRange {
        token: usize,
        position: usize,
        vocab_size: usize,
    },

    #[error("sequence length {len} exceeds n_ctx {n_ctx}")]
    SequenceTooLong { len: usize, n_ctx: usize },

    #[error("index out of range: {0}")]
    Index(String),

    #[error("rotary embedding needs an even dimension, got {0}")]
    OddRotaryDim(usize),

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("tau {0} outside (0, 1]")]
    TauOutOfRange(f64),

    #[error("non-finite loss")]
    NonFiniteLoss,

    #[error("non-finite loss at step {step}")]
    Divergence { step: usize },

    #[error("bad magic in {path}: expected \"CGT1\"")]
    BadMagic { path: PathBuf },

    #[error("truncated payload in {path}: tensor {tensor} is missing")]
    Truncated { path: PathBuf, tensor: String },

    #[error("malformed container {path}: {reason}")]
    Container { path: PathBuf, reason: String },

    #[error("manifest {path}: {reason}")]
    Manifest { path: PathBuf, reason: String },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error on {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("csv error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }
}
