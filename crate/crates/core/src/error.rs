use std::path::PathBuf;

use thiserror::Error;

use crate::collectives::CollectiveKind;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {what}: {message}")]
    Parse { what: String, message: String },

    /// A structural invariant of an input (graph, system, mapping) does not hold.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("unsupported collective {kind:?} on {topology}")]
    UnsupportedCollective { kind: CollectiveKind, topology: String },

    #[error("unknown sharding scheme `{0}`")]
    UnknownScheme(String),

    #[error("precedence violation: tensor {tensor} runs from partition {src} back to partition {dst}")]
    Precedence { tensor: usize, src: usize, dst: usize },

    #[error("missing catalog entry `{0}`")]
    MissingCatalogEntry(String),

    #[error("unknown topology preset `{0}`")]
    UnknownTopology(String),

    #[error("cannot factor {chips} chips for topology {topology}")]
    NonFactorable { chips: usize, topology: String },

    /// The optimization problem has no feasible point.
    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("solver timed out without an incumbent")]
    Timeout,

    #[error("model error: {0}")]
    Model(String),

    #[error("enumeration limit exceeded: {0}")]
    LimitExceeded(String),

    #[error("roofline inconsistency: {0}")]
    Roofline(String),

    #[error("external solver failed: {0}")]
    External(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
