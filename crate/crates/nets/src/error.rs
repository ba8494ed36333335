use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("unknown network family: {0}")]
    UnknownFamily(String),
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("truncation point {0} is not valid for this architecture")]
    InvalidTruncation(String),
    #[error("first layer is not linear; the error-transform identity holds exactly only for a linear first layer")]
    UnsupportedArchitecture,
    #[error("duplicate parameter name: {0}")]
    DuplicateParameter(String),
    #[error("unknown parameter: {0}")]
    UnknownParameter(String),
    #[error("checkpoint manifest corrupt: {0}")]
    CorruptManifest(String),
    #[error("checkpoint version {0} not supported")]
    UnknownVersion(u32),
    #[error("checkpoint tensor shape mismatch: {0}")]
    CheckpointShapeMismatch(String),
    #[error("checkpoint was written for a different spec (hash {found:#x}, expected {expected:#x})")]
    SpecMismatch { found: u64, expected: u64 },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Tensor(#[from] tensorcore::TensorError),
}

pub type Result<T> = std::result::Result<T, NetError>;
