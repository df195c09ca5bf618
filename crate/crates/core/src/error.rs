use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("node {node} out of range for graph with {node_count} nodes")]
    NodeOutOfRange { node: usize, node_count: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },

    #[error("backward requires a scalar output, got shape {0:?}")]
    NonScalarOutput((usize, usize)),

    #[error("neighborhood has {nodes} nodes, above the exact canonicalization cap of {cap}; use WL hashing instead")]
    CanonicalCapExceeded { nodes: usize, cap: usize },

    #[error("census radius mismatch: {0} vs {1}")]
    RadiusMismatch(usize, usize),

    #[error("census key mode mismatch")]
    ModeMismatch,

    #[error("instance with {nodes} nodes exceeds the enumeration cap of {cap}")]
    EnumerationCap { nodes: usize, cap: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("numerical abort: {0}")]
    Numerical(String),

    #[error("parse error in {path}: {msg}")]
    Parse { path: PathBuf, msg: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            msg: msg.into(),
        }
    }

    /// True for errors caused by user-supplied configuration or input.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Numerical(_) | Error::Io(_))
    }
}
