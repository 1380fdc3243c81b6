//! Leader/follower communication: packet codec, impairment injection,
//! transports, stale-packet hold and the time-domain passivity layer.

mod codec;
mod hold;
mod impair;
mod link;
mod tdpa;
mod transport;

use thiserror::Error;

pub use codec::*;
pub use hold::{StaleHold, HOLD_DECAY, HOLD_TIMEOUT};
pub use impair::{ChannelConfig, Delivery, ImpairedLink};
pub use link::{to_micros, BilateralChannel, FollowerCommand, LeaderFeedback, LinkStats};
pub use tdpa::{port_power, tdpa_damp, tdpa_observe, EnergyLedger, PortRole};
pub use transport::*;

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("invalid channel config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
