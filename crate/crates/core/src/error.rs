use std::io;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("timestamps not strictly increasing at frame {index}: {previous} -> {current} us")]
    NonMonotonic {
        index: usize,
        previous: i64,
        current: i64,
    },

    #[error("stale frame: timestamp {current} us is not after {last} us")]
    StaleFrame { last: i64, current: i64 },

    #[error("non-finite value in frame {0}")]
    NonFinite(usize),

    #[error("anchor {anchor} outside window of {len} frames")]
    Alignment { anchor: usize, len: usize },

    #[error("invalid device vector: {0}")]
    InvalidDevice(String),

    #[error("unknown device id `{0}`")]
    UnknownDevice(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("class {class} out of range for {classes} classes")]
    ClassOutOfRange { class: usize, classes: usize },

    #[error("batch normalization needs a batch of at least 2 in training mode, got {0}")]
    BatchTooSmall(usize),

    #[error("training fault: {0}")]
    TrainingFault(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("schema mismatch: expected {expected}, found {found}")]
    Schema { expected: String, found: String },

    #[error("line {line} (byte offset {offset}): {message}")]
    Corrupt {
        line: usize,
        offset: u64,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::TrainingFault(_) => 3,
            Error::Schema { .. } => 4,
            _ => 2,
        }
    }
}
