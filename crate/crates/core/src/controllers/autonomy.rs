use serde::{Deserialize, Serialize};

use super::AutonomyConfig;
use crate::environment::Stage;
use crate::kinodynamics::{Wrench, WrenchFrame};
use crate::scalar::Real;

/// Binary autonomy level of the follower wiggle.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AutonomyLevel {
    #[default]
    Manual = 0,
    Shared = 1,
}

impl AutonomyLevel {
    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Self::Manual),
            1 => Some(Self::Shared),
            _ => None,
        }
    }

    pub fn scale<T: Real>(self) -> T {
        match self {
            Self::Manual => T::zero(),
            Self::Shared => T::one(),
        }
    }
}

/// Instantaneous gate condition: lateral force above threshold and, when
/// stage gating is on, the insertion stage active.
pub fn autonomy_condition<T: Real>(f_ext: &Wrench<T>, cfg: &AutonomyConfig, stage: Stage) -> bool {
    debug_assert_eq!(f_ext.frame, WrenchFrame::EndEffector);
    if cfg.stage_gated && stage != Stage::GuidedInsertion {
        return false;
    }
    let fx = f_ext.force.x.as_f64();
    let fy = f_ext.force.y.as_f64();
    fx.hypot(fy) > cfg.threshold
}

/// Level given the condition onset time (`None` if the condition does not
/// currently hold). With a zero debounce window this is the plain
/// threshold rule.
pub fn autonomy_level<T: Real>(
    f_ext: &Wrench<T>,
    cfg: &AutonomyConfig,
    stage: Stage,
    onset: Option<f64>,
    now: f64,
) -> AutonomyLevel {
    if !autonomy_condition(f_ext, cfg, stage) {
        return AutonomyLevel::Manual;
    }
    if cfg.debounce_window <= 0.0 {
        return AutonomyLevel::Shared;
    }
    match onset {
        Some(t0) if now - t0 >= cfg.debounce_window => AutonomyLevel::Shared,
        _ => AutonomyLevel::Manual,
    }
}

/// Tracks the onset of the gate condition across ticks.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AutonomyGate {
    pub config: AutonomyConfig,
    onset: Option<f64>,
}

impl AutonomyGate {
    pub fn new(config: AutonomyConfig) -> Self {
        Self { config, onset: None }
    }

    pub fn update<T: Real>(&mut self, f_ext: &Wrench<T>, stage: Stage, now: f64) -> AutonomyLevel {
        if autonomy_condition(f_ext, &self.config, stage) {
            self.onset.get_or_insert(now);
        } else {
            self.onset = None;
        }
        autonomy_level(f_ext, &self.config, stage, self.onset, now)
    }

    pub fn reset(&mut self) {
        self.onset = None;
    }
}
