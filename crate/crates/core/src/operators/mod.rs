//! Operator intent: scripted virtual operators for reproducible batches and
//! an adapter for live human input. Both produce a wrench applied by the
//! hand at the leader end effector.

mod human;
mod profile;
mod scripted;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, Vector3, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::environment::Stage;
use crate::kinodynamics::Pose;

pub use human::{HumanAdapter, HumanCommand, HUMAN_SILENCE_TIMEOUT};
pub use profile::{HandImpedance, NoiseModel, OperatorProfile, Skill};
pub use scripted::{ScriptedOperator, ScriptedParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OperatorError {
    #[error("invalid operator profile: {0}")]
    InvalidProfile(String),
    #[error("malformed operator command: {0}")]
    MalformedCommand(String),
}

/// Teleoperation condition of a trial.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TeleopMode {
    Unilateral,
    Bilateral,
    Shared,
}

impl TeleopMode {
    pub const ALL: [TeleopMode; 3] = [TeleopMode::Unilateral, TeleopMode::Bilateral, TeleopMode::Shared];

    pub fn as_str(self) -> &'static str {
        match self {
            TeleopMode::Unilateral => "unilateral",
            TeleopMode::Bilateral => "bilateral",
            TeleopMode::Shared => "shared",
        }
    }

    /// Whether the leader receives force feedback.
    pub fn has_feedback(self) -> bool {
        self != TeleopMode::Unilateral
    }

    /// Display name used in result tables.
    pub fn label(self) -> &'static str {
        match self {
            TeleopMode::Unilateral => "Unil. Tele.",
            TeleopMode::Bilateral => "Bil. Tele.",
            TeleopMode::Shared => "Shared Auto.",
        }
    }
}

impl fmt::Display for TeleopMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TeleopMode {
    type Err = OperatorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "unilateral" | "unil" => Ok(TeleopMode::Unilateral),
            "bilateral" | "bil" => Ok(TeleopMode::Bilateral),
            "shared" => Ok(TeleopMode::Shared),
            other => Err(OperatorError::InvalidProfile(format!("unknown mode {other:?}"))),
        }
    }
}

/// Saturation of the hand wrench.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WrenchLimits {
    /// N.
    pub force: f64,
    /// N·m.
    pub moment: f64,
}

impl Default for WrenchLimits {
    fn default() -> Self {
        Self {
            force: 40.0,
            moment: 8.0,
        }
    }
}

/// Wrench the hand applies at the leader end effector, base axes,
/// `[force; moment]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OperatorWrench {
    pub wrench: Vector6<f64>,
    /// True when either part hit its limit.
    pub saturated: bool,
}

impl OperatorWrench {
    pub fn zero() -> Self {
        Self {
            wrench: Vector6::zeros(),
            saturated: false,
        }
    }

    /// Scales the force and moment parts independently onto their limits.
    pub fn clamped(wrench: Vector6<f64>, limits: &WrenchLimits) -> Self {
        let mut w = wrench;
        let mut saturated = false;
        for (start, limit) in [(0, limits.force), (3, limits.moment)] {
            let norm = w.fixed_rows::<3>(start).norm();
            if norm > limit {
                w.fixed_rows_mut::<3>(start).scale_mut(limit / norm);
                saturated = true;
            }
        }
        Self { wrench: w, saturated }
    }

    pub fn force(&self) -> Vector3<f64> {
        self.wrench.fixed_rows::<3>(0).into_owned()
    }

    pub fn moment(&self) -> Vector3<f64> {
        self.wrench.fixed_rows::<3>(3).into_owned()
    }
}

/// What the operator perceives of the leader device.
#[derive(Clone, Copy, Debug)]
pub struct LeaderView<'a> {
    pub pose: Pose<f64>,
    /// `[v; w]`, base axes.
    pub twist: Vector6<f64>,
    /// Base-frame geometric Jacobian.
    pub jacobian: &'a DMatrix<f64>,
    /// Feedback torque currently rendered on the leader joints.
    pub felt_torque: &'a DVector<f64>,
}

impl LeaderView<'_> {
    /// End-effector wrench equivalent to the felt joint torque
    /// (least-squares inverse of `J^T`).
    pub fn felt_wrench(&self) -> Vector6<f64> {
        if self.felt_torque.iter().all(|&t| t == 0.0) {
            return Vector6::zeros();
        }
        let j = self.jacobian;
        let jjt = j * j.transpose();
        match jjt.cholesky() {
            Some(c) => {
                let w = c.solve(&(j * self.felt_torque));
                Vector6::from_column_slice(w.as_slice())
            }
            None => Vector6::zeros(),
        }
    }
}

/// What the operator sees of the task through the camera.
#[derive(Clone, Copy, Debug)]
pub struct TaskView {
    pub hole_pose: Pose<f64>,
    /// m.
    pub peg_length: f64,
    /// m.
    pub hole_depth: f64,
    pub stage: Stage,
    /// Peg tip position along the hole axis, m; positive inside the hole.
    pub tip_depth: f64,
    pub geometry_scale: f64,
}
