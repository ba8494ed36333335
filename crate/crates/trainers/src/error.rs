use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("labels are required for supervised training")]
    MissingLabels,
    #[error("contrastive training needs a batch of at least 2 (no negatives otherwise)")]
    BatchTooSmall,
    #[error("rotation training requires a 4-way head, model has {0} classes")]
    WrongHead(usize),
    #[error("non-finite loss at epoch {epoch}, step {step}: training aborted")]
    NonFiniteLoss { epoch: usize, step: usize },
    #[error("target training data overlaps the attacker's few-shot set ({0} shared records)")]
    ProvenanceOverlap(String),
    #[error(transparent)]
    Net(#[from] nets::NetError),
    #[error(transparent)]
    Data(#[from] datapipe::DataError),
    #[error(transparent)]
    Tensor(#[from] tensorcore::TensorError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, TrainError>;
