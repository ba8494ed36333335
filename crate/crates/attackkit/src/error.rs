use thiserror::Error;

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("invalid attack config: {0}")]
    InvalidConfig(String),
    #[error("labels are required for this surface/strategy")]
    MissingLabels,
    #[error("guide selection needs at least one sample of another class")]
    SingleClassPool,
    #[error("non-finite gradient at outer step {step}: aborted (trace kept)")]
    NonFiniteGradient { step: usize },
    #[error("archive malformed: {0}")]
    ArchiveMalformed(String),
    #[error(transparent)]
    Net(#[from] nets::NetError),
    #[error(transparent)]
    Data(#[from] datapipe::DataError),
    #[error(transparent)]
    Tensor(#[from] tensorcore::TensorError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, AttackError>;
