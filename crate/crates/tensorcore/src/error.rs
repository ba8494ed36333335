use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape mismatch in {context}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        context: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{context}: expected scalar, got shape {shape:?}")]
    NotScalar { context: &'static str, shape: Vec<usize> },
    #[error("invalid dimensions: {0}")]
    InvalidDim(String),
    #[error("non-finite value encountered in {0}")]
    NonFinite(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, TensorError>;
