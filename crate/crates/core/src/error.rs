use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = FgcError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum FgcError {
    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("node {node} has degree {degree:e}, outside the log-barrier domain")]
    BarrierDomain { node: usize, degree: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("graph has an isolated node after {attempts} attempts")]
    IsolatedNode { attempts: usize },

    #[error("sensitive group {0} has no members")]
    EmptyGroup(usize),

    #[error("cluster {0} is empty")]
    EmptyCluster(usize),

    #[error("{solver} did not converge in {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("sweep {sweep}: {source}")]
    Sweep {
        sweep: usize,
        #[source]
        source: Box<FgcError>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },
}

impl FgcError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        FgcError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        FgcError::Parse {
            location: location.into(),
            message: message.into(),
        }
    }

    pub(crate) fn at_sweep(self, sweep: usize) -> Self {
        FgcError::Sweep {
            sweep,
            source: Box::new(self),
        }
    }
}
