//! Live session gateway: runs one teleoperation session in real time and
//! talks JSON to an operator console over a websocket at `/session`.

pub mod lifecycle;
pub mod protocol;
pub mod server;

pub use lifecycle::Lifecycle;
pub use protocol::*;
pub use server::{serve, ServiceConfig, ServiceHandle};

use teleosim_core::harness::HarnessError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error("{0}")]
    State(String),
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: std::net::SocketAddr,
        source: std::io::Error,
    },
    #[error("invalid service config: {0}")]
    Config(String),
}

impl ServiceError {
    /// Error frame reporting this failure to the console.
    pub fn frame(&self) -> ServerMessage {
        let code = match self {
            ServiceError::Harness(HarnessError::Numerical { .. }) => ErrorCode::Numerical,
            ServiceError::Harness(e) if e.is_config() => ErrorCode::Config,
            ServiceError::Harness(_) => ErrorCode::Io,
            ServiceError::State(_) => ErrorCode::InvalidState,
            ServiceError::Bind { .. } => ErrorCode::Io,
            ServiceError::Config(_) => ErrorCode::Config,
        };
        ServerMessage::error(code, self.to_string())
    }

    pub fn is_config(&self) -> bool {
        match self {
            ServiceError::Harness(e) => e.is_config(),
            ServiceError::Config(_) => true,
            _ => false,
        }
    }
}
