use std::path::PathBuf;

use thiserror::Error;

use crate::structure::Structure;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("operation requires {0}")]
    Unsupported(String),

    #[error("episode exceeded the maximum length of {limit} recommendations")]
    EpisodeTooLong { limit: u64 },

    #[error("saddle point is undefined: {0}")]
    DegenerateSaddle(String),

    #[error("expected a {expected:?} instance, found {found:?}")]
    WrongStructure {
        expected: Structure,
        found: Structure,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("learner has no pending selection for policy {0}")]
    UnexpectedObservation(usize),

    #[error("rejection sampling gave up after {0} draws")]
    RejectionBudget(usize),

    #[error("clustering failed: {0}")]
    Clustering(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable kind, used by the CLI's error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInstance(_) => "invalid_instance",
            Error::InvalidPolicy(_) => "invalid_policy",
            Error::Unsupported(_) => "unsupported",
            Error::EpisodeTooLong { .. } => "episode_too_long",
            Error::DegenerateSaddle(_) => "degenerate_saddle",
            Error::WrongStructure { .. } => "wrong_structure",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::UnexpectedObservation(_) => "unexpected_observation",
            Error::RejectionBudget(_) => "rejection_budget",
            Error::Clustering(_) => "clustering",
            Error::Io { .. } => "io",
            Error::Csv { .. } => "csv",
            Error::Json(_) => "json",
        }
    }
}
