use thiserror::Error;

use crate::{dynamics::DynamicsError, opalg::AlgebraError, oracle::OracleError, qcore::ModelError, witness::WitnessError};

/// Crate-level error, one variant per subsystem.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Witness(#[from] WitnessError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("configuration error at `{path}`: {msg}")]
    Config { path: String, msg: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn config(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config { path: path.into(), msg: msg.into() }
    }

    /// True when the failure is a physics precondition (truncation, degenerate
    /// steady state, ...) rather than malformed input.
    pub fn is_physics(&self) -> bool {
        match self {
            Error::Dynamics(_) => true,
            Error::Witness(e) => e.is_physics(),
            Error::Oracle(e) => e.is_physics(),
            Error::Model(ModelError::DimensionCap { .. }) => true,
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
