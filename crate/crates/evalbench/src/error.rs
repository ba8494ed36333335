use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid bench setup: {0}")]
    Invalid(String),
    #[error("duplicate target name: {0}")]
    DuplicateTarget(String),
    #[error("duplicate sweep point: {0}")]
    DuplicateSweepPoint(String),
    #[error("cannot evaluate an empty set")]
    EmptyEvaluation,
    #[error("target {target} shares training data with the surrogate's few-shot set: refusing to evaluate")]
    ProvenanceOverlap { target: String },
    #[error("target {target} has no training provenance record; cannot verify the no-box separation")]
    ProvenanceMissing { target: String },
    #[error(transparent)]
    Net(#[from] nets::NetError),
    #[error(transparent)]
    Data(#[from] datapipe::DataError),
    #[error(transparent)]
    Train(#[from] trainers::TrainError),
    #[error(transparent)]
    Attack(#[from] attackkit::AttackError),
    #[error(transparent)]
    Tensor(#[from] tensorcore::TensorError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, BenchError>;
