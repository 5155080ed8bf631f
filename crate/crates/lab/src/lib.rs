//! File formats, experiment orchestration and metrics export around
//! `cff-core`.

pub mod config;
pub mod experiment;
pub mod io;
pub mod model;

use std::fmt;

pub use config::ExperimentConfig;

/// Failure classes, each with its own process exit code.
#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("gradient check failed: {0}")]
    Check(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(cff_core::Error),
}

impl LabError {
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Config(_) => 1,
            LabError::Data(_) | LabError::Io { .. } => 2,
            LabError::Numeric(_) => 3,
            LabError::Check(_) => 4,
            LabError::Core(e) => match e {
                cff_core::Error::NonFinite(_) => 3,
                cff_core::Error::Format(_) => 2,
                _ => 1,
            },
        }
    }

    pub fn io(path: impl fmt::Display, source: std::io::Error) -> Self {
        LabError::Io {
            path: path.to_string(),
            source,
        }
    }
}

impl From<cff_core::Error> for LabError {
    fn from(e: cff_core::Error) -> Self {
        match e {
            cff_core::Error::NonFinite(m) => LabError::Numeric(m),
            other => LabError::Core(other),
        }
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
