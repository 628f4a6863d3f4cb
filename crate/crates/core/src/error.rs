use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("{what}: enumeration of {size} elements exceeds the cap of {cap}; {hint}")]
    Capacity {
        what: &'static str,
        size: u128,
        cap: u128,
        hint: &'static str,
    },

    #[error("degree distribution has zero mean degree")]
    ZeroMeanDegree,

    #[error("conditional degree law undefined: state {state} carries no neighbor mass")]
    UndefinedConditional { state: usize },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("graph has no edges after filtering: {0}")]
    EmptyGraph(String),

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }
}
