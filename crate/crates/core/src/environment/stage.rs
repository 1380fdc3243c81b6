use std::collections::VecDeque;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::task::TaskGeometry;
use super::EnvError;
use crate::kinodynamics::Pose;

/// Progress of one assembly trial.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    #[default]
    PositionGuiding = 0,
    GuidedInsertion = 1,
    Done = 2,
}

impl Stage {
    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Stage::PositionGuiding),
            1 => Some(Stage::GuidedInsertion),
            2 => Some(Stage::Done),
            _ => None,
        }
    }
}

/// Trigger volume, success depth and time limits.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolConfig {
    /// mm at true scale; multiplied by the geometry scale.
    pub approach_margin: f64,
    pub success_fraction: f64,
    /// s.
    pub stage_limit: f64,
    /// s.
    pub total_limit: f64,
    /// N.
    pub safety_force_limit: f64,
    /// Averaging window of the contact force for the safety check, s.
    pub safety_window: f64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            approach_margin: 5.0,
            success_fraction: 0.9,
            stage_limit: 30.0,
            total_limit: 60.0,
            safety_force_limit: 60.0,
            safety_window: 0.05,
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        let ok = self.approach_margin >= 0.0
            && self.success_fraction > 0.0
            && self.success_fraction <= 1.0
            && self.stage_limit > 0.0
            && self.total_limit >= self.stage_limit
            && self.safety_force_limit > 0.0
            && self.safety_window >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(EnvError::InvalidProtocol(format!("{self:?}")))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageState {
    pub stage: Stage,
    /// s.
    pub t_stage_entry: f64,
    /// Entry time of each later stage, s.
    pub t_insertion: Option<f64>,
    pub t_done: Option<f64>,
    /// mm at simulation scale.
    pub insertion_depth: f64,
}

impl StageState {
    pub fn new(t0: f64) -> Self {
        Self {
            stage: Stage::PositionGuiding,
            t_stage_entry: t0,
            t_insertion: None,
            t_done: None,
            insertion_depth: 0.0,
        }
    }
}

impl Default for StageState {
    fn default() -> Self {
        Self::new(0.0)
    }
}

/// Advances the stage machine for the current peg tip position. Transitions
/// latch.
pub fn stage_update(
    state: &StageState,
    peg_tip: &Vector3<f64>,
    geometry: &TaskGeometry,
    protocol: &ProtocolConfig,
    scale: f64,
    now: f64,
) -> StageState {
    let hole = &geometry.hole_pose;
    let local = hole.orientation.inverse_transform_vector(&(peg_tip - hole.position));
    let depth_m = local.z.clamp(0.0, geometry.depth);
    let mut next = *state;
    next.insertion_depth = depth_m * 1e3;

    if next.stage == Stage::PositionGuiding {
        let margin = protocol.approach_margin * 1e-3 * scale;
        let radial = local.x.hypot(local.y);
        if radial <= geometry.hole.circumradius() + margin && local.z >= -margin {
            next.stage = Stage::GuidedInsertion;
            next.t_stage_entry = now;
            next.t_insertion = Some(now);
        }
    }
    if next.stage == Stage::GuidedInsertion && depth_m >= protocol.success_fraction * geometry.depth {
        next.stage = Stage::Done;
        next.t_stage_entry = now;
        next.t_done = Some(now);
    }
    next
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    #[default]
    None,
    Timeout,
    SafetyMargin,
    Aborted,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub success: bool,
    /// s; failures are recorded at the total limit.
    pub t_total: f64,
    pub t_stage1: f64,
    pub t_stage2: f64,
    pub failure_reason: FailureReason,
}

/// Moving average of the contact force magnitude over a fixed window.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ForceWindow {
    window: f64,
    samples: VecDeque<(f64, f64)>,
    sum: f64,
}

impl ForceWindow {
    pub fn new(window: f64) -> Self {
        Self {
            window,
            samples: VecDeque::new(),
            sum: 0.0,
        }
    }

    pub fn push(&mut self, t: f64, force: f64) {
        self.samples.push_back((t, force));
        self.sum += force;
        while let Some(&(t0, f0)) = self.samples.front() {
            if t - t0 < self.window || self.samples.len() == 1 {
                break;
            }
            self.samples.pop_front();
            self.sum -= f0;
        }
    }

    pub fn mean(&self) -> f64 {
        if self.samples.is_empty() {
            0.0
        } else {
            (self.sum / self.samples.len() as f64).max(0.0)
        }
    }

    pub fn clear(&mut self) {
        self.samples.clear();
        self.sum = 0.0;
    }
}

fn failed(state: &StageState, now: f64, protocol: &ProtocolConfig, reason: FailureReason) -> TrialOutcome {
    let (t1, t2) = stage_times(state, now);
    TrialOutcome {
        success: false,
        t_total: protocol.total_limit,
        t_stage1: t1,
        t_stage2: t2,
        failure_reason: reason,
    }
}

/// Stage durations so far; trials start at t = 0.
fn stage_times(state: &StageState, now: f64) -> (f64, f64) {
    match state.t_insertion {
        None => (now, 0.0),
        Some(t1) => (t1, state.t_done.unwrap_or(now) - t1),
    }
}

/// Decides the trial outcome, `None` while it is still running.
/// `force` is the windowed contact force magnitude, N.
pub fn adjudicate(
    state: &StageState,
    force: f64,
    now: f64,
    protocol: &ProtocolConfig,
) -> Option<TrialOutcome> {
    if state.stage == Stage::Done {
        let (t1, t2) = stage_times(state, now);
        let t = state.t_done.unwrap_or(now);
        return Some(TrialOutcome {
            success: true,
            t_total: t,
            t_stage1: t1,
            t_stage2: t2,
            failure_reason: FailureReason::None,
        });
    }
    if force > protocol.safety_force_limit {
        return Some(failed(state, now, protocol, FailureReason::SafetyMargin));
    }
    let eps = 1e-9;
    if now - state.t_stage_entry >= protocol.stage_limit - eps || now >= protocol.total_limit - eps {
        return Some(failed(state, now, protocol, FailureReason::Timeout));
    }
    None
}

/// Outcome for an operator abort.
pub fn aborted(state: &StageState, now: f64, protocol: &ProtocolConfig) -> TrialOutcome {
    failed(state, now, protocol, FailureReason::Aborted)
}

/// Position of the peg tip in the hole frame, m.
pub fn tip_in_hole(tip: &Vector3<f64>, hole: &Pose<f64>) -> Vector3<f64> {
    hole.orientation.inverse_transform_vector(&(tip - hole.position))
}
