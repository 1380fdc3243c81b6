use std::collections::VecDeque;

use nalgebra::{Vector3, Vector6};
use serde::{Deserialize, Serialize};

use super::{HandImpedance, LeaderView, OperatorError, OperatorWrench, WrenchLimits};

/// Silence after which the adapter releases the leader, s.
pub const HUMAN_SILENCE_TIMEOUT: f64 = 0.2;

/// Command from the live console.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HumanCommand {
    /// s, session time of arrival.
    pub t: f64,
    /// Target end-effector velocity, base axes, m/s.
    pub linear: [f64; 3],
    /// rad/s.
    #[serde(default)]
    pub angular: [f64; 3],
}

impl HumanCommand {
    pub fn validate(&self) -> Result<(), OperatorError> {
        if self.linear.iter().chain(&self.angular).chain([&self.t]).all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(OperatorError::MalformedCommand("non-finite value".into()))
        }
    }
}

/// Turns commanded end-effector velocities into a hand wrench through the
/// hand impedance, integrating a reference pose.
#[derive(Clone, Debug)]
pub struct HumanAdapter {
    hand: HandImpedance,
    limits: WrenchLimits,
    queue: VecDeque<HumanCommand>,
    current: Option<HumanCommand>,
    p_ref: Option<Vector3<f64>>,
    r_ref: Option<nalgebra::UnitQuaternion<f64>>,
}

impl HumanAdapter {
    pub fn new(hand: HandImpedance, limits: WrenchLimits) -> Self {
        Self {
            hand,
            limits,
            queue: VecDeque::new(),
            current: None,
            p_ref: None,
            r_ref: None,
        }
    }

    /// Queues a command; malformed commands are rejected.
    pub fn push(&mut self, cmd: HumanCommand) -> Result<(), OperatorError> {
        cmd.validate()?;
        self.queue.push_back(cmd);
        Ok(())
    }

    /// True while the dead-man timeout has not expired.
    pub fn engaged(&self, now: f64) -> bool {
        self.current.is_some_and(|c| now - c.t <= HUMAN_SILENCE_TIMEOUT)
    }

    pub fn step(&mut self, leader: &LeaderView<'_>, now: f64, dt: f64) -> OperatorWrench {
        while let Some(c) = self.queue.front() {
            if c.t > now {
                break;
            }
            self.current = self.queue.pop_front();
        }
        if !self.engaged(now) {
            self.p_ref = None;
            self.r_ref = None;
            return OperatorWrench::zero();
        }
        let cmd = self.current.expect("engaged implies a command");
        let lin = Vector3::from(cmd.linear);
        let ang = Vector3::from(cmd.angular);
        let p_ref = self.p_ref.get_or_insert(leader.pose.position);
        *p_ref += lin * dt;
        let r_ref = self.r_ref.get_or_insert(leader.pose.orientation);
        *r_ref = nalgebra::UnitQuaternion::from_scaled_axis(ang * dt) * *r_ref;

        let v = leader.twist.fixed_rows::<3>(0).into_owned();
        let w = leader.twist.fixed_rows::<3>(3).into_owned();
        let h = &self.hand;
        let force = (*p_ref - leader.pose.position) * h.stiffness + (lin - v) * h.damping;
        let moment = crate::kinodynamics::orientation_error(r_ref, &leader.pose.orientation) * h.rot_stiffness
            + (ang - w) * h.rot_damping;
        let mut wrench = Vector6::zeros();
        wrench.fixed_rows_mut::<3>(0).copy_from(&force);
        wrench.fixed_rows_mut::<3>(3).copy_from(&moment);
        OperatorWrench::clamped(wrench, &self.limits)
    }
}
