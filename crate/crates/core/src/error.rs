use thiserror::Error;

use crate::extraction::DetectError;
use crate::harness::runner::RunnerError;
use crate::insertion::InsertError;
use crate::nn::NnError;
use crate::syntax::ParseError;
use crate::trainer::TrainError;
use crate::transform::TransformError;
use crate::zk::ZkError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Insert(#[from] InsertError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed record on line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Zk(#[from] ZkError),
    #[error(transparent)]
    Runner(#[from] RunnerError),
    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
