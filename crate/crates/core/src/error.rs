use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    #[error("position {position:?} is not strictly inside room {room:?}")]
    Geometry { position: [f64; 3], room: [f64; 3] },
    #[error("constraint infeasible after {attempts} attempts: {constraint}")]
    ConstraintInfeasible { constraint: String, attempts: usize },
    #[error("SNR is undefined for a silent signal")]
    UndefinedSnr,
    #[error("sample rate mismatch: expected {expected} Hz, got {got} Hz")]
    SampleRateMismatch { expected: u32, got: u32 },
    #[error("dry signal of source {source_index} has {len} samples, schedule needs {needed}")]
    DrySignalTooShort {
        source_index: usize,
        len: usize,
        needed: usize,
    },
    #[error("invalid framing: {0}")]
    InvalidFraming(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("array geometry mismatch: {0}")]
    GeometryMismatch(String),
    #[error("numeric instability: {0}")]
    NumericInstability(String),
    #[error("training diverged at step {step}: loss = {loss}")]
    Divergence { step: u64, loss: f64 },
    #[error("corpus exhausted: {0}")]
    CorpusExhausted(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("malformed file {path:?}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("I/O error on {path:?}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("wav error on {path:?}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },
    #[error("json error on {path:?}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
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

    /// Broad class of the failure, used by the command-line front end to pick
    /// an exit code.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::InvalidFraming(_) => ErrorKind::Config,
            Error::NumericInstability(_) | Error::Divergence { .. } => ErrorKind::Numeric,
            _ => ErrorKind::Data,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numeric,
}
