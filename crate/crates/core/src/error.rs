use std::path::PathBuf;

use thiserror::Error;

use crate::dataset::SubGroup;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("dataset file {path} not found\n{instructions}")]
    MissingDataset { path: PathBuf, instructions: String },

    #[error("empty group {0}")]
    EmptyGroup(SubGroup),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("training failed: {0}")]
    Training(String),

    #[error("model format error: {0}")]
    ModelFormat(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by a metric that is undefined on the given data
    /// (a group without positives, a class missing entirely).
    pub fn is_degenerate_metric(&self) -> bool {
        matches!(self, Error::UndefinedMetric(_))
    }
}
