//! Deterministic simulator for bilateral teleoperation with shared autonomy
//! on tight-clearance peg-in-hole assembly.

pub mod channel;
pub mod controllers;
pub mod environment;
pub mod harness;
pub mod kinodynamics;
pub mod operators;
pub mod scalar;

pub use scalar::Real;

pub type Model = kinodynamics::ManipulatorModel<f64>;
pub type State = kinodynamics::JointState<f64>;
pub type Pose = kinodynamics::Pose<f64>;
pub type Wrench = kinodynamics::Wrench<f64>;
