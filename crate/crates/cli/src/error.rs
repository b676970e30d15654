use std::path::PathBuf;

use oversmooth::data::DataError;
use oversmooth::model::ModelError;
use oversmooth::train::TrainError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {msg}")]
    Config { path: PathBuf, msg: String },
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("checkpoint {path}: {msg}")]
    Checkpoint { path: PathBuf, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Train(#[from] TrainError),
}

impl CliError {
    /// 1: configuration or usage; 2: dataset, checkpoint or file I/O;
    /// 3: numerical failure during training.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Usage(_) => 1,
            CliError::Data(_) | CliError::Checkpoint { .. } | CliError::Io { .. } => 2,
            CliError::Train(e) => match e {
                TrainError::InvalidConfig(_) | TrainError::Model(ModelError::InvalidSpec(_)) => 1,
                TrainError::EmptyMask | TrainError::InvalidLabel { .. } => 2,
                _ => 3,
            },
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        CliError::Config {
            path: path.into(),
            msg: msg.into(),
        }
    }
}
