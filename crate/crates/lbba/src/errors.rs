//! CLI failure classes and their exit codes.

use std::fmt;

/// Exit codes per failure class: config 2, data 3, numeric 4, provenance 5.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(String),
    Numeric(String),
    Provenance(String),
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
            CliError::Provenance(_) => 5,
            CliError::Other(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Numeric(m) => write!(f, "numeric error: {m}"),
            CliError::Provenance(m) => write!(f, "provenance error: {m}"),
            CliError::Other(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<crate::runconfig::ConfigError> for CliError {
    fn from(e: crate::runconfig::ConfigError) -> Self {
        CliError::Config(e.0)
    }
}

impl From<datapipe::DataError> for CliError {
    fn from(e: datapipe::DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<tensorcore::TensorError> for CliError {
    fn from(e: tensorcore::TensorError) -> Self {
        match e {
            tensorcore::TensorError::NonFinite(_) => CliError::Numeric(e.to_string()),
            tensorcore::TensorError::InvalidConfig(_) => CliError::Config(e.to_string()),
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<nets::NetError> for CliError {
    fn from(e: nets::NetError) -> Self {
        match e {
            nets::NetError::UnknownFamily(_) | nets::NetError::InvalidSpec(_) | nets::NetError::InvalidTruncation(_) => {
                CliError::Config(e.to_string())
            }
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<trainers::TrainError> for CliError {
    fn from(e: trainers::TrainError) -> Self {
        match e {
            trainers::TrainError::ProvenanceOverlap(_) => CliError::Provenance(e.to_string()),
            trainers::TrainError::NonFiniteLoss { .. } => CliError::Numeric(e.to_string()),
            trainers::TrainError::InvalidConfig(_) | trainers::TrainError::WrongHead(_) => {
                CliError::Config(e.to_string())
            }
            trainers::TrainError::Data(d) => CliError::Data(d.to_string()),
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<attackkit::AttackError> for CliError {
    fn from(e: attackkit::AttackError) -> Self {
        match e {
            attackkit::AttackError::InvalidConfig(_) => CliError::Config(e.to_string()),
            attackkit::AttackError::NonFiniteGradient { .. } => CliError::Numeric(e.to_string()),
            attackkit::AttackError::Data(d) => CliError::Data(d.to_string()),
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<evalbench::BenchError> for CliError {
    fn from(e: evalbench::BenchError) -> Self {
        match e {
            evalbench::BenchError::ProvenanceOverlap { .. } | evalbench::BenchError::ProvenanceMissing { .. } => {
                CliError::Provenance(e.to_string())
            }
            evalbench::BenchError::Invalid(_) | evalbench::BenchError::DuplicateSweepPoint(_) => {
                CliError::Config(e.to_string())
            }
            evalbench::BenchError::Data(d) => CliError::Data(d.to_string()),
            evalbench::BenchError::Train(t) => CliError::from(t),
            evalbench::BenchError::Attack(a) => CliError::from(a),
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
