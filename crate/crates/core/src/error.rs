use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    #[error("could not draw a connected graph after {attempts} attempts")]
    ConnectivityFailure { attempts: u32 },

    #[error("ingestion error at row {row}: {message}")]
    Ingestion { row: u64, message: String },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("partition error: {0}")]
    Partition(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("aggregation rule infeasible: {0}")]
    RuleInfeasible(String),

    #[error("attack infeasible: {0}")]
    AttackInfeasible(String),

    #[error("invalid config field `{field}`: {message}")]
    InvalidConfig { field: String, message: String },

    #[error("{suite} check failed: {detail}")]
    CheckFailed { suite: String, detail: String },

    #[error("epoch {epoch}, worker {worker}: {source}")]
    Simulation {
        epoch: usize,
        worker: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn at(self, epoch: usize, worker: usize) -> Self {
        Error::Simulation {
            epoch,
            worker,
            source: Box::new(self),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
