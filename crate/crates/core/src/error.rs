use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the blockmodel library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("line {line}: node index {index} out of range for node_count {node_count}")]
    NodeOutOfRange {
        line: usize,
        index: usize,
        node_count: usize,
    },

    #[error("line {line}: self-edge ({node}, {node}) is not allowed")]
    SelfEdge { line: usize, node: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("value out of domain: {0}")]
    Domain(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The innovation covariance could not be factorized, even after jitter.
    #[error("innovation covariance is numerically singular at coordinates {coordinates:?}")]
    SingularInnovation { coordinates: Vec<usize> },

    #[error("prior covariance is singular on the observed coordinates")]
    SingularPrior,

    /// ROC/AUC is undefined when one of the two classes is absent.
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
