use nalgebra::{DVector, Vector6};
use serde::{Deserialize, Serialize};

use super::ControlError;
use crate::scalar::Real;

/// Cartesian stiffness of the leader assist on rx, ry (N·m/rad).
pub const TABLE_IV_LEADER_STIFFNESS: [f64; 6] = [0.0, 0.0, 0.0, 35.0, 35.0, 0.0];
/// Joint stiffness of the follower (N·m/rad).
pub const TABLE_IV_JOINT_STIFFNESS: [f64; 7] = [450.0, 450.0, 450.0, 300.0, 150.0, 75.0, 45.0];
pub const TABLE_IV_WIGGLE_AMPLITUDE: [f64; 2] = [0.766, 0.906];
pub const TABLE_IV_WIGGLE_FREQUENCY: [f64; 2] = [2.150, 2.160];
pub const TABLE_IV_WIGGLE_PHASE: [f64; 2] = [-1.562, 0.610];

/// Damping ratio used to derive joint damping from stiffness on a unit-mass
/// model, `D = 2 * zeta * sqrt(K)`.
pub const DEFAULT_JOINT_DAMPING_RATIO: f64 = 0.7;
/// Default detection threshold on the lateral contact force, N.
pub const DEFAULT_FORCE_THRESHOLD: f64 = 2.0;

fn mask<T: Real>(rows: [f64; 6]) -> Vector6<T> {
    Vector6::from_iterator(rows.iter().map(|&x| T::lit(x)))
}

fn check_diag<T: Real>(name: &str, v: impl IntoIterator<Item = T>) -> Result<(), ControlError> {
    for x in v {
        if !x.finite() || x < T::zero() {
            return Err(ControlError::InvalidGains(format!(
                "{name} entries must be finite and non-negative"
            )));
        }
    }
    Ok(())
}

/// Leader-side gains. All matrices are diagonal and act on the 6-D
/// `[x, y, z, rx, ry, rz]` end-effector error.
#[derive(Clone, Debug, PartialEq)]
pub struct LeaderGains<T: Real> {
    pub stiffness: Vector6<T>,
    pub damping: Vector6<T>,
    pub selection: Vector6<T>,
}

impl<T: Real> Default for LeaderGains<T> {
    fn default() -> Self {
        let k = TABLE_IV_LEADER_STIFFNESS;
        Self {
            stiffness: mask(k),
            damping: mask(k.map(|x| 2.0 * x.sqrt())),
            selection: mask([0.0, 0.0, 0.0, 1.0, 1.0, 0.0]),
        }
    }
}

impl<T: Real> LeaderGains<T> {
    pub fn validate(&self) -> Result<(), ControlError> {
        check_diag("leader stiffness", self.stiffness.iter().copied())?;
        check_diag("leader damping", self.damping.iter().copied())?;
        check_diag("leader selection", self.selection.iter().copied())
    }
}

/// Follower joint impedance plus the two Cartesian selection matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct FollowerGains<T: Real> {
    pub stiffness: DVector<T>,
    pub damping: DVector<T>,
    /// Rows of the feedforward wiggle that reach the arm.
    pub wiggle_selection: Vector6<T>,
    /// Rows of the contact wrench fed back to the leader.
    pub feedback_selection: Vector6<T>,
}

impl<T: Real> FollowerGains<T> {
    /// Stiffness from the experiment table, damping from
    /// [`DEFAULT_JOINT_DAMPING_RATIO`].
    pub fn table_iv() -> Self {
        Self::with_stiffness(&TABLE_IV_JOINT_STIFFNESS)
    }

    pub fn with_stiffness(k: &[f64]) -> Self {
        Self {
            stiffness: DVector::from_iterator(k.len(), k.iter().map(|&x| T::lit(x))),
            damping: DVector::from_iterator(
                k.len(),
                k.iter()
                    .map(|&x| T::lit(2.0 * DEFAULT_JOINT_DAMPING_RATIO * x.sqrt())),
            ),
            wiggle_selection: mask([0.0, 0.0, 0.0, 1.0, 1.0, 0.0]),
            feedback_selection: mask([1.0, 1.0, 1.0, 0.0, 0.0, 0.0]),
        }
    }

    pub fn validate(&self, n: usize) -> Result<(), ControlError> {
        if self.stiffness.len() != n || self.damping.len() != n {
            return Err(ControlError::DimensionMismatch {
                expected: n,
                got: self.stiffness.len().min(self.damping.len()),
            });
        }
        if self.stiffness.iter().any(|&k| !(k > T::zero())) {
            return Err(ControlError::InvalidGains(
                "joint stiffness must be positive".into(),
            ));
        }
        check_diag("joint damping", self.damping.iter().copied())?;
        check_diag("wiggle selection", self.wiggle_selection.iter().copied())?;
        check_diag("feedback selection", self.feedback_selection.iter().copied())
    }
}

/// Per-direction Lissajous feedforward parameters, rows `[x, y, z, rx, ry, rz]`.
#[derive(Clone, Debug, PartialEq)]
pub struct WiggleParams<T: Real> {
    /// N for translational rows, N·m for rotational rows.
    pub amplitude: Vector6<T>,
    /// Hz.
    pub frequency: Vector6<T>,
    /// rad.
    pub phase: Vector6<T>,
}

impl<T: Real> Default for WiggleParams<T> {
    fn default() -> Self {
        let row = |v: [f64; 2]| mask([0.0, 0.0, 0.0, v[0], v[1], 0.0]);
        Self {
            amplitude: row(TABLE_IV_WIGGLE_AMPLITUDE),
            frequency: row(TABLE_IV_WIGGLE_FREQUENCY),
            phase: row(TABLE_IV_WIGGLE_PHASE),
        }
    }
}

impl<T: Real> WiggleParams<T> {
    pub fn zero() -> Self {
        Self {
            amplitude: Vector6::zeros(),
            frequency: Vector6::zeros(),
            phase: Vector6::zeros(),
        }
    }

    pub fn validate(&self) -> Result<(), ControlError> {
        check_diag("wiggle frequency", self.frequency.iter().copied())?;
        if self
            .amplitude
            .iter()
            .chain(self.phase.iter())
            .any(|x| !x.finite())
        {
            return Err(ControlError::InvalidGains("wiggle parameters must be finite".into()));
        }
        Ok(())
    }
}

/// When the follower is allowed to inject the wiggle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AutonomyConfig {
    /// Lateral force threshold, N.
    pub threshold: f64,
    /// Time the lateral force must stay above threshold before the gate
    /// opens, s. Zero reproduces the plain threshold rule.
    pub debounce_window: f64,
    /// Keep the gate closed outside the insertion stage.
    pub stage_gated: bool,
}

impl Default for AutonomyConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_FORCE_THRESHOLD,
            debounce_window: 0.0,
            stage_gated: true,
        }
    }
}

impl AutonomyConfig {
    pub fn validate(&self) -> Result<(), ControlError> {
        if !(self.threshold > 0.0) || !self.threshold.is_finite() {
            return Err(ControlError::InvalidGains("force threshold must be positive".into()));
        }
        if !(self.debounce_window >= 0.0) || !self.debounce_window.is_finite() {
            return Err(ControlError::InvalidGains("debounce window must be non-negative".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_embed_experiment_table() {
        let l = LeaderGains::<f64>::default();
        assert_eq!(l.stiffness.as_slice(), &[0.0, 0.0, 0.0, 35.0, 35.0, 0.0]);
        assert_eq!(l.selection.as_slice(), &[0.0, 0.0, 0.0, 1.0, 1.0, 0.0]);
        assert!((l.damping[3] - 11.832159566199232).abs() < 1e-12);

        let f = FollowerGains::<f64>::table_iv();
        assert_eq!(f.stiffness.as_slice(), &[450.0, 450.0, 450.0, 300.0, 150.0, 75.0, 45.0]);
        assert!((f.damping[0] - 1.4 * 450f64.sqrt()).abs() < 1e-12);
        assert_eq!(f.wiggle_selection.as_slice(), &[0.0, 0.0, 0.0, 1.0, 1.0, 0.0]);
        assert_eq!(f.feedback_selection.as_slice(), &[1.0, 1.0, 1.0, 0.0, 0.0, 0.0]);

        let w = WiggleParams::<f64>::default();
        assert_eq!(w.amplitude.as_slice(), &[0.0, 0.0, 0.0, 0.766, 0.906, 0.0]);
        assert_eq!(w.frequency.as_slice(), &[0.0, 0.0, 0.0, 2.150, 2.160, 0.0]);
        assert_eq!(w.phase.as_slice(), &[0.0, 0.0, 0.0, -1.562, 0.610, 0.0]);
    }

    #[test]
    fn validation_rejects_bad_values() {
        let mut f = FollowerGains::<f64>::table_iv();
        assert!(f.validate(7).is_ok());
        assert!(f.validate(6).is_err());
        f.stiffness[2] = 0.0;
        assert!(f.validate(7).is_err());

        let mut l = LeaderGains::<f64>::default();
        l.damping[3] = -1.0;
        assert!(l.validate().is_err());

        let mut w = WiggleParams::<f64>::default();
        w.frequency[3] = -2.0;
        assert!(w.validate().is_err());

        let a = AutonomyConfig { threshold: 0.0, ..Default::default() };
        assert!(a.validate().is_err());
        let a = AutonomyConfig { debounce_window: -0.1, ..Default::default() };
        assert!(a.validate().is_err());
    }
}
