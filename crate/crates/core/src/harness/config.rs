use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::HarnessError;
use crate::channel::ChannelConfig;
use crate::controllers::{
    AutonomyConfig, FollowerGains, LeaderGains, WiggleParams, DEFAULT_JOINT_DAMPING_RATIO, TABLE_IV_JOINT_STIFFNESS,
    TABLE_IV_LEADER_STIFFNESS, TABLE_IV_WIGGLE_AMPLITUDE, TABLE_IV_WIGGLE_FREQUENCY, TABLE_IV_WIGGLE_PHASE,
};
use crate::environment::{ContactParams, ProtocolConfig, TaskConfig, TaskId};
use crate::operators::{OperatorProfile, ScriptedParams, Skill, TeleopMode};

/// Version tag mixed into every config hash.
pub const CONFIG_VERSION: &str = "teleosim-config-v1";

/// Preset id or a full task description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TaskSelect {
    Preset(TaskId),
    Custom(TaskConfig),
}

impl TaskSelect {
    pub fn resolve(&self) -> Result<TaskConfig, HarnessError> {
        match self {
            TaskSelect::Preset(id) => Ok(TaskConfig::preset(id)?),
            TaskSelect::Custom(t) => {
                t.validate()?;
                Ok(t.clone())
            }
        }
    }

    pub fn id(&self) -> TaskId {
        match self {
            TaskSelect::Preset(id) => id.clone(),
            TaskSelect::Custom(t) => t.id.clone(),
        }
    }
}

/// Who drives the leader.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OperatorSelect {
    /// `"novice"`, `"intermediate"`, `"expert"` or `"human"`.
    Named(String),
    Profile(OperatorProfile),
}

impl OperatorSelect {
    pub fn is_human(&self) -> bool {
        matches!(self, OperatorSelect::Named(s) if s.eq_ignore_ascii_case("human"))
    }

    /// Profile of a scripted operator; `None` for the human adapter.
    pub fn profile(&self) -> Result<Option<OperatorProfile>, HarnessError> {
        match self {
            OperatorSelect::Profile(p) => {
                p.validate()?;
                Ok(Some(*p))
            }
            OperatorSelect::Named(s) if s.eq_ignore_ascii_case("human") => Ok(None),
            OperatorSelect::Named(s) => Ok(Some(OperatorProfile::preset(s.parse::<Skill>()?))),
        }
    }

    pub fn label(&self) -> String {
        match self {
            OperatorSelect::Named(s) => s.to_ascii_lowercase(),
            OperatorSelect::Profile(p) => p.skill.as_str().to_string(),
        }
    }
}

/// Controller gains as plain arrays.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GainsConfig {
    /// Leader Cartesian stiffness `[x, y, z, rx, ry, rz]`.
    pub leader_stiffness: [f64; 6],
    /// `None` derives critical damping `2 sqrt(K)`.
    pub leader_damping: Option<[f64; 6]>,
    pub leader_selection: [f64; 6],
    pub joint_stiffness: Vec<f64>,
    pub joint_damping_ratio: f64,
    pub wiggle_selection: [f64; 6],
    pub feedback_selection: [f64; 6],
    /// Rows rx, ry.
    pub wiggle_amplitude: [f64; 2],
    pub wiggle_frequency: [f64; 2],
    pub wiggle_phase: [f64; 2],
    pub autonomy: AutonomyConfig,
}

impl Default for GainsConfig {
    fn default() -> Self {
        Self {
            leader_stiffness: TABLE_IV_LEADER_STIFFNESS,
            leader_damping: None,
            leader_selection: [0.0, 0.0, 0.0, 1.0, 1.0, 0.0],
            joint_stiffness: TABLE_IV_JOINT_STIFFNESS.to_vec(),
            joint_damping_ratio: DEFAULT_JOINT_DAMPING_RATIO,
            wiggle_selection: [0.0, 0.0, 0.0, 1.0, 1.0, 0.0],
            feedback_selection: [1.0, 1.0, 1.0, 0.0, 0.0, 0.0],
            wiggle_amplitude: TABLE_IV_WIGGLE_AMPLITUDE,
            wiggle_frequency: TABLE_IV_WIGGLE_FREQUENCY,
            wiggle_phase: TABLE_IV_WIGGLE_PHASE,
            autonomy: AutonomyConfig::default(),
        }
    }
}

fn v6(a: [f64; 6]) -> nalgebra::Vector6<f64> {
    nalgebra::Vector6::from(a)
}

impl GainsConfig {
    pub fn leader(&self) -> LeaderGains<f64> {
        let damping = self
            .leader_damping
            .unwrap_or_else(|| self.leader_stiffness.map(|k| 2.0 * k.max(0.0).sqrt()));
        LeaderGains {
            stiffness: v6(self.leader_stiffness),
            damping: v6(damping),
            selection: v6(self.leader_selection),
        }
    }

    pub fn follower(&self) -> FollowerGains<f64> {
        let mut g = FollowerGains::with_stiffness(&self.joint_stiffness);
        g.damping = nalgebra::DVector::from_iterator(
            self.joint_stiffness.len(),
            self.joint_stiffness
                .iter()
                .map(|k| 2.0 * self.joint_damping_ratio * k.max(0.0).sqrt()),
        );
        g.wiggle_selection = v6(self.wiggle_selection);
        g.feedback_selection = v6(self.feedback_selection);
        g
    }

    pub fn wiggle(&self) -> WiggleParams<f64> {
        let row = |v: [f64; 2]| v6([0.0, 0.0, 0.0, v[0], v[1], 0.0]);
        WiggleParams {
            amplitude: row(self.wiggle_amplitude),
            frequency: row(self.wiggle_frequency),
            phase: row(self.wiggle_phase),
        }
    }

    pub fn validate(&self, n: usize) -> Result<(), HarnessError> {
        self.leader().validate()?;
        self.follower().validate(n)?;
        self.wiggle().validate()?;
        self.autonomy.validate()?;
        if !(self.joint_damping_ratio >= 0.0) {
            return Err(HarnessError::Config("joint_damping_ratio must be non-negative".into()));
        }
        Ok(())
    }
}

/// Where the peg starts relative to the hole mouth, mm at true scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StartConfig {
    /// Tip offset in the hole frame x, y.
    pub lateral: [f64; 2],
    /// Tip height above the mouth.
    pub height: f64,
}

impl Default for StartConfig {
    fn default() -> Self {
        Self {
            lateral: [8.0, 5.0],
            height: 12.0,
        }
    }
}

/// Everything that defines a trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SessionConfig {
    pub task: TaskSelect,
    pub mode: TeleopMode,
    pub operator: OperatorSelect,
    pub scripted: ScriptedParams,
    pub channel: ChannelConfig,
    pub tdpa: bool,
    pub gains: GainsConfig,
    pub contact: ContactParams,
    pub protocol: ProtocolConfig,
    pub geometry_scale: f64,
    /// Control period, s.
    pub dt: f64,
    /// Contact integration steps per control period.
    pub contact_substeps: usize,
    pub seed: u64,
    /// Bound on the hole axis estimation error, rad.
    pub normal_noise: f64,
    pub start: StartConfig,
    /// Viscous friction on the leader joints, N·m·s/rad.
    pub leader_joint_friction: f64,
    /// Keep per-tick rows in the record.
    pub record_rows: bool,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            task: TaskSelect::Preset(TaskId::A),
            mode: TeleopMode::Shared,
            operator: OperatorSelect::Named("intermediate".into()),
            scripted: ScriptedParams::default(),
            channel: ChannelConfig::default(),
            tdpa: true,
            gains: GainsConfig::default(),
            contact: ContactParams::default(),
            protocol: ProtocolConfig::default(),
            geometry_scale: 10.0,
            dt: 1e-3,
            contact_substeps: 10,
            seed: 0,
            normal_noise: 0.01,
            start: StartConfig::default(),
            leader_joint_friction: 0.5,
            record_rows: true,
        }
    }
}

impl SessionConfig {
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let cfg: SessionConfig = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("session config serializes")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let task = self.task.resolve()?;
        task.clone().with_scale(self.geometry_scale).validate()?;
        self.operator.profile()?;
        self.scripted.validate()?;
        self.channel.validate()?;
        self.gains.validate(7)?;
        self.contact.validate()?;
        self.protocol.validate()?;
        if !(self.dt > 0.0 && self.dt <= crate::kinodynamics::MAX_DT) {
            return Err(HarnessError::Config(format!("dt {} out of range", self.dt)));
        }
        if self.contact_substeps == 0 {
            return Err(HarnessError::Config("contact_substeps must be at least 1".into()));
        }
        if !(self.normal_noise >= 0.0) || !(self.leader_joint_friction >= 0.0) {
            return Err(HarnessError::Config("noise and friction must be non-negative".into()));
        }
        if self.start.lateral.iter().chain([&self.start.height]).any(|v| !v.is_finite()) {
            return Err(HarnessError::Config("start offsets must be finite".into()));
        }
        Ok(())
    }

    /// Hash of everything but the seed and the row-recording switch, so all
    /// trials of a batch cell share it.
    pub fn config_hash(&self) -> String {
        let mut c = self.clone();
        c.seed = 0;
        c.record_rows = true;
        let mut h = Sha256::new();
        h.update(CONFIG_VERSION.as_bytes());
        h.update(c.to_toml().as_bytes());
        hex::encode(h.finalize())
    }

    /// Task with this session's geometry scale applied.
    pub fn task_config(&self) -> Result<TaskConfig, HarnessError> {
        Ok(self.task.resolve()?.with_scale(self.geometry_scale))
    }
}
