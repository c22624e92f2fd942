use std::path::PathBuf;

use apjfnn_autograd::TensorError;
use thiserror::Error;

use crate::training::DivergenceReport;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("state error: {0}")]
    State(String),
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    #[error("training diverged at epoch {}, step {}", .0.epoch, .0.step)]
    Divergence(Box<DivergenceReport>),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
