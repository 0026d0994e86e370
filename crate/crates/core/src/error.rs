use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("no path from node {source_node} to node {sink}")]
    NoPath { source_node: usize, sink: usize },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("degree bounds [{min}, {max}] infeasible for {nodes} nodes")]
    InfeasibleDegrees { nodes: usize, min: usize, max: usize },

    #[error("source and sink not connected after {attempts} attempts")]
    ConnectivityNotAchieved { attempts: usize },

    #[error("brute-force enumeration limited to {limit} nodes, graph has {nodes}")]
    EnumerationGuard { nodes: usize, limit: usize },

    #[error("iterate left the flow polytope at step {step}: max violation {violation:e}")]
    Infeasible { step: usize, violation: f64 },

    #[error("horizon of {horizon} steps exceeded")]
    HorizonExceeded { horizon: usize },

    #[error("matrix is singular")]
    Singular,

    #[error("matrix is not symmetric positive definite")]
    NotPositiveDefinite,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    /// True for errors caused by bad user input rather than runtime failures.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::InvalidArgument(_)
                | Error::InfeasibleDegrees { .. }
                | Error::InvalidGraph(_)
                | Error::Json { .. }
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
