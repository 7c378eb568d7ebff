use thiserror::Error;

use crate::brainage::BrainAgeError;
use crate::cohort::CohortError;
use crate::federation::ProtocolError;
use crate::model::ModelError;
use crate::stats::StatsError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Top-level error for the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Cohort(#[from] CohortError),
    #[error(transparent)]
    BrainAge(#[from] BrainAgeError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("pairing error: {0}")]
    Pairing(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("json error in {context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
