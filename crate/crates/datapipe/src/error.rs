use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("dataset file missing or unreadable: {path}")]
    MissingFile { path: PathBuf },
    #[error("dataset file malformed: {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },
    #[error("class folder {0} contains no images")]
    EmptyClass(String),
    #[error("requested {requested} samples but only {available} available")]
    InsufficientSamples { requested: usize, available: usize },
    #[error("labels are required for this operation")]
    MissingLabels,
    #[error("images must be square for rotation, got {0}x{1}")]
    NonSquare(usize, usize),
    #[error("invalid sample set: {0}")]
    Invalid(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Tensor(#[from] tensorcore::TensorError),
}

pub type Result<T> = std::result::Result<T, DataError>;
