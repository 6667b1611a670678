//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,

    #[error("non-finite coordinate at point {index}")]
    NonFinitePoint { index: usize },

    #[error("color component out of [0,1] at point {index}")]
    ColorOutOfRange { index: usize },

    #[error("voxel coordinate component {value} out of supported range [-2^20, 2^20)")]
    CoordOutOfRange { value: i64 },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("empty instance in partition (instance {id})")]
    EmptyInstance { id: u32 },

    #[error("non-finite gradient in parameter block {block}")]
    NonFiniteGradient { block: String },

    #[error("non-finite loss at step {step} ({detail})")]
    NonFiniteLoss { step: u64, detail: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error at {path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("corrupt checkpoint at byte offset {offset}: {msg}")]
    Checkpoint { offset: u64, msg: String },

    #[error("object placement failed after {attempts} attempts; room too small for configured objects")]
    Placement { attempts: usize },

    #[error("unpaired scene files: {0}")]
    UnpairedFiles(String),

    #[error("{path}: {source}")]
    IoAt {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Exit code for the CLI: 2 for I/O failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) | Error::IoAt { .. } => 2,
            _ => 1,
        }
    }

    pub(crate) fn io_at(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::IoAt {
            path: path.display().to_string(),
            source,
        }
    }
}
