//! Peg-in-hole world: task geometry, sampled penalty contact on the follower
//! peg, the two-stage progress machine and trial adjudication.

mod contact;
mod normal;
mod stage;
mod task;

use thiserror::Error;

pub use contact::{contact_wrench, ContactModel, ContactParams, ContactReport, FrictionState};
pub use normal::{perturb_axis, surface_normal_estimate};
pub use stage::{
    aborted, adjudicate, stage_update, tip_in_hole, FailureReason, ForceWindow, ProtocolConfig, Stage,
    StageState, TrialOutcome,
};
pub use task::{Materials, PegShape, Section, TaskConfig, TaskGeometry, TaskId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("invalid task: {0}")]
    InvalidTask(String),
    #[error("invalid contact parameters: {0}")]
    InvalidContact(String),
    #[error("invalid protocol: {0}")]
    InvalidProtocol(String),
    #[error("non-finite {0}")]
    NonFinite(&'static str),
}
