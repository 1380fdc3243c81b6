use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use teleosim_core::environment::{Section, Stage, TaskGeometry, TaskId, TrialOutcome};
use teleosim_core::harness::TaskSelect;
use teleosim_core::operators::TeleopMode;
use teleosim_core::{Pose, Wrench};

/// Tag sent in the hello frame.
pub const PROTOCOL_VERSION: &str = "teleosim-session-v1";

/// Bounds applied to commanded end-effector velocities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VelocityLimits {
    /// m/s.
    pub linear: f64,
    /// rad/s.
    pub angular: f64,
}

impl Default for VelocityLimits {
    fn default() -> Self {
        Self {
            linear: 0.25,
            angular: 1.0,
        }
    }
}

fn clamp_norm(v: [f64; 3], max: f64) -> ([f64; 3], bool) {
    let n = Vector3::from(v).norm();
    if n <= max {
        (v, false)
    } else {
        let s = max / n;
        ([v[0] * s, v[1] * s, v[2] * s], true)
    }
}

impl VelocityLimits {
    /// Scales each part down to its bound, keeping direction. Returns the
    /// clamped pair and whether anything was cut.
    pub fn clamp(&self, linear: [f64; 3], angular: [f64; 3]) -> ([f64; 3], [f64; 3], bool) {
        let (l, a) = clamp_norm(linear, self.linear);
        let (w, b) = clamp_norm(angular, self.angular);
        (l, w, a || b)
    }

    pub fn clamp_rate(&self, rate: f64) -> f64 {
        rate.clamp(-self.angular, self.angular)
    }
}

/// Message from the operator console.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    /// Target leader end-effector twist, base axes.
    EeVelocity {
        /// m/s.
        linear: [f64; 3],
        /// rad/s.
        #[serde(default)]
        angular: [f64; 3],
        /// Client clock, s; echoed in snapshots.
        #[serde(default)]
        t_client: Option<f64>,
    },
    /// Yaw rate about the leader tool axis, rad/s; adds to `ee_velocity`.
    GripYawRate {
        rate: f64,
        #[serde(default)]
        t_client: Option<f64>,
    },
    SetMode {
        mode: TeleopMode,
    },
    StartTrial {
        #[serde(default)]
        task: Option<TaskSelect>,
        #[serde(default)]
        seed: Option<u64>,
    },
    Abort,
    Heartbeat {
        #[serde(default)]
        t_client: Option<f64>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    /// Not valid JSON or not a known message.
    Malformed,
    /// Command values out of range.
    InvalidCommand,
    /// Command not allowed in the current lifecycle state.
    InvalidState,
    /// Another operator holds the session.
    Busy,
    Config,
    Io,
    /// The simulation failed and the trial was ended.
    Numerical,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LifecycleState {
    Idle,
    Running,
    Done,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseView {
    /// m.
    pub position: [f64; 3],
    /// Unit quaternion `[w, x, y, z]`.
    pub orientation: [f64; 4],
}

impl From<&Pose> for PoseView {
    fn from(p: &Pose) -> Self {
        let q = p.orientation.quaternion();
        Self {
            position: p.position.into(),
            orientation: [q.w, q.i, q.j, q.k],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WrenchView {
    /// N.
    pub force: [f64; 3],
    /// N·m.
    pub moment: [f64; 3],
}

impl From<&Wrench> for WrenchView {
    fn from(w: &Wrench) -> Self {
        Self {
            force: w.force.into(),
            moment: w.moment.into(),
        }
    }
}

/// Cross-section in its own plane, m.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum SectionView {
    Circle { radius: f64 },
    Polygon { vertices: Vec<[f64; 2]> },
}

impl From<&Section> for SectionView {
    fn from(s: &Section) -> Self {
        match s {
            Section::Circle { radius } => SectionView::Circle { radius: *radius },
            Section::Polygon { normals, apothems } => {
                let k = normals.len();
                let vertices = (0..k)
                    .map(|i| {
                        let j = (i + 1) % k;
                        let (a, b) = (normals[i], normals[j]);
                        let det = a.x * b.y - a.y * b.x;
                        let v = Vector2::new(apothems[i] * b.y - apothems[j] * a.y, a.x * apothems[j] - b.x * apothems[i])
                            / det;
                        [v.x, v.y]
                    })
                    .collect();
                SectionView::Polygon { vertices }
            }
        }
    }
}

/// Static task geometry, m. The hole frame's z-axis points into the hole.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HoleView {
    pub pose: PoseView,
    pub section: SectionView,
    pub peg_section: SectionView,
    pub peg_length: f64,
    pub clearance: f64,
    pub depth: f64,
    pub chamfer: f64,
}

impl From<&TaskGeometry> for HoleView {
    fn from(g: &TaskGeometry) -> Self {
        Self {
            pose: (&g.hole_pose).into(),
            section: (&g.hole).into(),
            peg_section: (&g.peg).into(),
            peg_length: g.peg_length,
            clearance: g.clearance,
            depth: g.depth,
            chamfer: g.chamfer,
        }
    }
}

/// Peg carried by the follower: its frame is the follower flange and the
/// axis is the flange z-axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PegView {
    pub pose: PoseView,
    /// m.
    pub tip: [f64; 3],
}

/// Periodic state frame. `t` is service time and never decreases; `trial_t`
/// restarts with every trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub seq: u64,
    /// s.
    pub t: f64,
    pub state: LifecycleState,
    pub task: TaskId,
    pub mode: TeleopMode,
    pub seed: u64,
    /// s.
    pub trial_t: f64,
    pub leader: PoseView,
    pub follower: PoseView,
    pub peg: PegView,
    pub hole: HoleView,
    /// Contact wrench on the follower, end-effector frame.
    pub f_ext: WrenchView,
    /// ‖τ_d,f‖ rendered on the leader, N·m.
    pub feedback_norm: f64,
    /// 0 manual, 1 wiggle assist on.
    pub eta: u8,
    pub stage: Stage,
    /// s left in the current stage.
    pub stage_remaining: f64,
    /// s left in the trial.
    pub total_remaining: f64,
    pub insertion_depth_mm: f64,
    /// Operator commands are driving the leader.
    pub engaged: bool,
    /// Last client clock received.
    pub t_client: Option<f64>,
    pub outcome: Option<TrialOutcome>,
}

/// Files written for a finished trial.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialFiles {
    pub csv: String,
    pub json: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Hello {
        protocol: String,
        version: String,
        snapshot_hz: f64,
        /// s.
        heartbeat: f64,
        limits: VelocityLimits,
        state: LifecycleState,
        task: TaskId,
        mode: TeleopMode,
    },
    Snapshot(Box<StateSnapshot>),
    TrialStarted {
        task: TaskId,
        mode: TeleopMode,
        seed: u64,
    },
    TrialDone {
        task: TaskId,
        mode: TeleopMode,
        seed: u64,
        outcome: TrialOutcome,
        files: Option<TrialFiles>,
    },
    ModeChanged {
        mode: TeleopMode,
    },
    Error {
        code: ErrorCode,
        message: String,
    },
    Heartbeat {
        t: f64,
    },
}

impl ServerMessage {
    pub fn error(code: ErrorCode, message: impl Into<String>) -> Self {
        ServerMessage::Error {
            code,
            message: message.into(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages serialize")
    }
}

/// Parses one text frame; the error is the frame to send back.
pub fn parse_client(text: &str) -> Result<ClientMessage, ServerMessage> {
    serde_json::from_str(text).map_err(|e| ServerMessage::error(ErrorCode::Malformed, e.to_string()))
}
