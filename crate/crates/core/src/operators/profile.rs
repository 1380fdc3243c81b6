use serde::{Deserialize, Serialize};

use super::OperatorError;

/// Operator imperfections. Distances are mm at true scale and are multiplied
/// by the geometry scale of the task.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseModel {
    /// Bound on the misjudged hole position along the hole frame axes, mm.
    /// Each trial draws every component uniformly within `±` this value.
    pub perception_offset: [f64; 3],
    /// Hand force tremor amplitude per axis, N.
    pub tremor_amp: f64,
    /// Upper edge of the tremor band, Hz.
    pub tremor_band: f64,
    /// Bound on the held tilt of the peg relative to the hole axis, rad.
    pub angular_misalignment: f64,
    /// Mixed into the trial seed.
    pub seed: u64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Skill::Intermediate.noise()
    }
}

impl NoiseModel {
    pub fn none() -> Self {
        Self {
            perception_offset: [0.0; 3],
            tremor_amp: 0.0,
            tremor_band: 0.0,
            angular_misalignment: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), OperatorError> {
        let vals = self
            .perception_offset
            .iter()
            .chain([&self.tremor_amp, &self.tremor_band, &self.angular_misalignment]);
        for &v in vals {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(OperatorError::InvalidProfile(
                    "noise magnitudes must be finite and non-negative".into(),
                ));
            }
        }
        Ok(())
    }

    /// Componentwise `self <= other`.
    pub fn dominated_by(&self, other: &NoiseModel) -> bool {
        self.perception_offset
            .iter()
            .zip(&other.perception_offset)
            .all(|(a, b)| a <= b)
            && self.tremor_amp <= other.tremor_amp
            && self.tremor_band <= other.tremor_band
            && self.angular_misalignment <= other.angular_misalignment
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Skill {
    Novice,
    Intermediate,
    Expert,
}

impl Skill {
    pub const ALL: [Skill; 3] = [Skill::Novice, Skill::Intermediate, Skill::Expert];

    pub fn noise(self) -> NoiseModel {
        let (offset, tremor, tilt) = match self {
            Skill::Novice => (1.2, 1.5, 0.06),
            Skill::Intermediate => (0.8, 1.0, 0.04),
            Skill::Expert => (0.4, 0.5, 0.02),
        };
        NoiseModel {
            perception_offset: [offset, offset, 0.0],
            tremor_amp: tremor,
            tremor_band: 8.0,
            angular_misalignment: tilt,
            seed: 0,
        }
    }

    /// Reaction latency to felt forces and visual progress, s.
    pub fn latency(self) -> f64 {
        match self {
            Skill::Novice => 0.4,
            Skill::Intermediate => 0.25,
            Skill::Expert => 0.15,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Skill::Novice => "novice",
            Skill::Intermediate => "intermediate",
            Skill::Expert => "expert",
        }
    }
}

impl std::str::FromStr for Skill {
    type Err = OperatorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "novice" => Ok(Skill::Novice),
            "intermediate" => Ok(Skill::Intermediate),
            "expert" => Ok(Skill::Expert),
            other => Err(OperatorError::InvalidProfile(format!("unknown skill {other:?}"))),
        }
    }
}

/// Hand impedance the operator uses to drive the leader.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HandImpedance {
    /// N/m.
    pub stiffness: f64,
    /// N·s/m.
    pub damping: f64,
    /// N·m/rad.
    pub rot_stiffness: f64,
    /// N·m·s/rad.
    pub rot_damping: f64,
}

impl Default for HandImpedance {
    fn default() -> Self {
        Self {
            stiffness: 600.0,
            damping: 40.0,
            rot_stiffness: 4.0,
            rot_damping: 1.0,
        }
    }
}

impl HandImpedance {
    pub fn validate(&self) -> Result<(), OperatorError> {
        let ok = [self.stiffness, self.damping, self.rot_stiffness, self.rot_damping]
            .iter()
            .all(|v| *v >= 0.0 && v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(OperatorError::InvalidProfile("hand impedance must be non-negative".into()))
        }
    }
}

/// Skill preset plus the knobs derived from it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorProfile {
    pub skill: Skill,
    #[serde(default)]
    pub noise: NoiseModel,
    /// s.
    pub latency: f64,
    #[serde(default)]
    pub hand: HandImpedance,
}

impl OperatorProfile {
    pub fn preset(skill: Skill) -> Self {
        Self {
            skill,
            noise: skill.noise(),
            latency: skill.latency(),
            hand: HandImpedance::default(),
        }
    }

    /// Preset with every noise source switched off.
    pub fn noiseless(skill: Skill) -> Self {
        Self {
            noise: NoiseModel::none(),
            ..Self::preset(skill)
        }
    }

    pub fn validate(&self) -> Result<(), OperatorError> {
        self.noise.validate()?;
        self.hand.validate()?;
        if !(self.latency >= 0.0 && self.latency.is_finite()) {
            return Err(OperatorError::InvalidProfile("latency must be non-negative".into()));
        }
        Ok(())
    }
}

impl Default for OperatorProfile {
    fn default() -> Self {
        Self::preset(Skill::Intermediate)
    }
}
