//! Trial runner, batch statistics, result tables and the dataset writer.

mod batch;
mod config;
mod dataset;
mod session;
mod table;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use batch::*;
pub use config::*;
pub use dataset::*;
pub use session::*;
pub use table::*;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("numerical failure at tick {tick}: {message}")]
    Numerical { tick: u64, message: String },
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error(transparent)]
    Env(#[from] crate::environment::EnvError),
    #[error(transparent)]
    Control(#[from] crate::controllers::ControlError),
    #[error(transparent)]
    Dynamics(#[from] crate::kinodynamics::DynamicsError),
    #[error(transparent)]
    Channel(#[from] crate::channel::ChannelError),
    #[error(transparent)]
    Operator(#[from] crate::operators::OperatorError),
}

impl HarnessError {
    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
    }

    /// Configuration problems as opposed to failures while running.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            HarnessError::Config(_) | HarnessError::Env(_) | HarnessError::Operator(_)
        )
    }
}
