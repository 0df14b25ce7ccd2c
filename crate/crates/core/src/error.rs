use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("{op} expects a scalar, got shape {shape:?}")]
    Rank { op: &'static str, shape: Vec<usize> },

    #[error("softmax row {row} has every index masked")]
    DegenerateSoftmax { row: usize },

    #[error("attention needs at least two agents, got {0}")]
    SingleAgent(usize),

    #[error("mixing ratio {0} is outside [0, 1]")]
    Schedule(f32),

    #[error("environment contract violated: {0}")]
    Contract(String),

    #[error("instance too large for exhaustive check: {agents} agents x {actions} actions")]
    Capacity { agents: usize, actions: usize },

    #[error("invalid config `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("architecture mismatch:\n{0}")]
    Architecture(String),

    #[error("`{0}` is not supported for algorithm `{1}`")]
    Unsupported(&'static str, String),

    #[error("empty batch")]
    EmptyBatch,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Format(String),
}

impl Error {
    pub(crate) fn dim(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Dimension {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }

    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
