use std::path::PathBuf;

use thiserror::Error;

use crate::archive::Bin;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed input: expected {expected} sensed inputs, got {got}")]
    MalformedInput { expected: usize, got: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("agent index {index} out of range for {n_agents} agents")]
    AgentIndex { index: usize, n_agents: usize },

    #[error("too few RSS samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("parameter {index} = {value} outside [{lo}, {hi}]")]
    ParamOutOfRange { index: usize, value: f64, lo: f64, hi: f64 },

    #[error("incompatible binning: {0}")]
    IncompatibleBinning(String),

    #[error("bin {0} is outside the archive dimensions")]
    BinOutOfRange(Bin),

    #[error("empty cell at bin {0}")]
    EmptyCell(Bin),

    #[error("repertoire is empty")]
    EmptyRepertoire,

    #[error("insufficient runs: need at least {needed}, got {got}")]
    InsufficientRuns { needed: usize, got: usize },

    #[error("malformed archive {path}: line {line}: {msg}")]
    Archive { path: PathBuf, line: usize, msg: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
