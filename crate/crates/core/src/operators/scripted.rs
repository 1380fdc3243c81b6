use std::collections::VecDeque;
use std::f64::consts::TAU;

use nalgebra::{Unit, UnitQuaternion, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{LeaderView, OperatorError, OperatorProfile, OperatorWrench, TaskView, TeleopMode, WrenchLimits};
use crate::environment::Stage;
use crate::kinodynamics::orientation_error;

/// Policy knobs of the scripted operator. Lengths in mm and speeds in mm/s
/// are at true scale and get multiplied by the geometry scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScriptedParams {
    /// mm/s.
    pub approach_speed: f64,
    /// mm/s.
    pub insert_speed: f64,
    /// Tip height above the mouth where the approach ends, mm.
    pub pre_height: f64,
    /// How far the commanded tip leads the seen tip while pushing, mm.
    pub lead: f64,
    /// Growth of the lead while no progress is seen, mm/s.
    pub escalation_rate: f64,
    /// Seen depth must grow by this much to count as progress, mm.
    pub progress_step: f64,
    /// s without progress before escalating.
    pub stall_time: f64,
    /// Felt axial force the operator will not exceed, N.
    pub force_cap: f64,
    /// Yield to felt lateral force, mm/N.
    pub compliance: f64,
    /// Cap on the compliance offset, mm.
    pub compliance_limit: f64,
    /// Time constant of the held tilt decaying while a felt jam persists, s.
    pub realign_time: f64,
    /// Back-off distance after a felt jam lasting twice the stall time, mm.
    pub retreat: f64,
    pub limits: WrenchLimits,
}

impl Default for ScriptedParams {
    fn default() -> Self {
        Self {
            approach_speed: 6.0,
            insert_speed: 3.0,
            pre_height: 2.0,
            lead: 3.0,
            escalation_rate: 1.0,
            progress_step: 0.2,
            stall_time: 1.0,
            force_cap: 20.0,
            compliance: 0.5,
            compliance_limit: 3.0,
            realign_time: 2.0,
            retreat: 2.0,
            limits: WrenchLimits::default(),
        }
    }
}

impl ScriptedParams {
    pub fn validate(&self) -> Result<(), OperatorError> {
        let vals = [
            self.approach_speed,
            self.insert_speed,
            self.pre_height,
            self.lead,
            self.escalation_rate,
            self.progress_step,
            self.stall_time,
            self.force_cap,
            self.compliance,
            self.compliance_limit,
            self.realign_time,
            self.retreat,
            self.limits.force,
            self.limits.moment,
        ];
        if vals.iter().all(|v| *v >= 0.0 && v.is_finite()) && self.approach_speed > 0.0 && self.insert_speed > 0.0 {
            Ok(())
        } else {
            Err(OperatorError::InvalidProfile(format!("{self:?}")))
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Percept {
    t: f64,
    /// Rendered force, base axes.
    force: Vector3<f64>,
    depth: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Phase {
    Approach,
    Insert,
}

/// Impedance-to-waypoint virtual operator.
#[derive(Clone, Debug)]
pub struct ScriptedOperator {
    profile: OperatorProfile,
    params: ScriptedParams,
    mode: TeleopMode,
    scale: f64,
    /// Misjudged mouth position, hole frame, m.
    offset: Vector3<f64>,
    /// Held tilt of the peg axis.
    tilt_axis: Unit<Vector3<f64>>,
    tilt: f64,
    aligned: UnitQuaternion<f64>,
    tremor: [[(f64, f64, f64); 3]; 3],
    percepts: VecDeque<Percept>,
    seen: Option<Percept>,
    phase: Phase,
    started: bool,
    start_lateral: Vector3<f64>,
    start_depth: f64,
    path_s: f64,
    path_len: f64,
    orientation: UnitQuaternion<f64>,
    depth_ref: f64,
    lead: f64,
    comply: Vector3<f64>,
    best_depth: f64,
    t_progress: f64,
}

impl ScriptedOperator {
    pub fn new(
        profile: OperatorProfile,
        params: ScriptedParams,
        mode: TeleopMode,
        scale: f64,
        seed: u64,
    ) -> Result<Self, OperatorError> {
        profile.validate()?;
        params.validate()?;
        let noise = profile.noise;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ noise.seed.rotate_left(17));
        let mm = 1e-3 * scale;
        let mut offset = Vector3::zeros();
        for i in 0..3 {
            let b = noise.perception_offset[i];
            offset[i] = if b > 0.0 { rng.random_range(-b..=b) * mm } else { 0.0 };
        }
        let (tilt_axis, tilt) = if noise.angular_misalignment > 0.0 {
            let angle = rng.random_range(0.5 * noise.angular_misalignment..=noise.angular_misalignment);
            let phi = rng.random_range(0.0..TAU);
            (Unit::new_normalize(Vector3::new(phi.cos(), phi.sin(), 0.0)), angle)
        } else {
            (Vector3::x_axis(), 0.0)
        };
        let mut tremor = [[(0.0, 0.0, 0.0); 3]; 3];
        if noise.tremor_amp > 0.0 && noise.tremor_band > 0.0 {
            for axis in tremor.iter_mut() {
                for c in axis.iter_mut() {
                    *c = (
                        noise.tremor_amp / 3.0,
                        rng.random_range(0.3 * noise.tremor_band..=noise.tremor_band),
                        rng.random_range(0.0..TAU),
                    );
                }
            }
        }
        Ok(Self {
            profile,
            params,
            mode,
            scale,
            offset,
            tilt_axis,
            tilt,
            aligned: UnitQuaternion::identity(),
            tremor,
            percepts: VecDeque::new(),
            seen: None,
            phase: Phase::Approach,
            started: false,
            start_lateral: Vector3::zeros(),
            start_depth: 0.0,
            path_s: 0.0,
            path_len: 0.0,
            orientation: UnitQuaternion::identity(),
            depth_ref: 0.0,
            lead: 0.0,
            comply: Vector3::zeros(),
            best_depth: f64::NEG_INFINITY,
            t_progress: 0.0,
        })
    }

    pub fn mode(&self) -> TeleopMode {
        self.mode
    }

    /// Misjudged mouth position in the hole frame, m.
    pub fn perception_offset(&self) -> Vector3<f64> {
        self.offset
    }

    /// Tilt the hand holds relative to the hole axis, rad.
    pub fn tilt_angle(&self) -> f64 {
        self.tilt
    }

    fn tremor_force(&self, t: f64) -> Vector3<f64> {
        Vector3::from_fn(|i, _| {
            self.tremor[i]
                .iter()
                .map(|&(a, f, phi)| a * (TAU * f * t + phi).sin())
                .sum()
        })
    }

    fn perceive(&mut self, force: Vector3<f64>, depth: f64, now: f64) {
        self.percepts.push_back(Percept { t: now, force, depth });
        let horizon = now - self.profile.latency;
        while let Some(p) = self.percepts.front() {
            if p.t > horizon + 1e-12 {
                break;
            }
            self.seen = self.percepts.pop_front();
        }
    }

    /// Hand wrench for this tick. `leader.felt_torque` is ignored in
    /// unilateral mode.
    pub fn step(&mut self, leader: &LeaderView<'_>, task: &TaskView, now: f64, dt: f64) -> OperatorWrench {
        let hole = task.hole_pose;
        let to_hole = |p: &Vector3<f64>| hole.orientation.inverse_transform_vector(&(p - hole.position));
        let axis = hole.z_axis();
        let mm = 1e-3 * self.scale;
        let p = self.params;

        if !self.started {
            self.started = true;
            let local = to_hole(&leader.pose.position);
            self.start_lateral = Vector3::new(local.x, local.y, 0.0);
            self.start_depth = local.z + task.peg_length;
            self.depth_ref = self.start_depth;
            // Align the current orientation with the hole axis, then tilt.
            let z = leader.pose.z_axis();
            let align = UnitQuaternion::rotation_between(&z, &axis).unwrap_or_else(UnitQuaternion::identity);
            self.aligned = align * leader.pose.orientation;
            let target = Vector3::new(self.offset.x, self.offset.y, 0.0);
            let dz = -p.pre_height * mm - self.start_depth;
            self.path_len = ((target - self.start_lateral).norm_squared() + dz * dz).sqrt();
            self.t_progress = now;
        }

        let felt = if self.mode.has_feedback() {
            leader.felt_wrench().fixed_rows::<3>(0).into_owned()
        } else {
            Vector3::zeros()
        };
        self.perceive(felt, task.tip_depth, now);
        let seen = self.seen.unwrap_or(Percept {
            t: now,
            force: Vector3::zeros(),
            depth: task.tip_depth,
        });

        let target_lateral = Vector3::new(self.offset.x, self.offset.y, 0.0);
        let pre_depth = -p.pre_height * mm;
        let lateral;
        match self.phase {
            Phase::Approach => {
                self.path_s = (self.path_s + p.approach_speed * mm * dt).min(self.path_len);
                let u = if self.path_len > 0.0 { self.path_s / self.path_len } else { 1.0 };
                lateral = self.start_lateral + (target_lateral - self.start_lateral) * u;
                self.depth_ref = self.start_depth + (pre_depth - self.start_depth) * u;
                if u >= 1.0 || task.stage != Stage::PositionGuiding {
                    self.phase = Phase::Insert;
                    self.lead = p.lead * mm;
                    self.best_depth = seen.depth;
                    self.t_progress = now;
                }
            }
            Phase::Insert => {
                lateral = target_lateral;
                if seen.depth > self.best_depth + p.progress_step * mm {
                    self.best_depth = seen.depth;
                    self.t_progress = now;
                }
                let axial_back = -seen.force.dot(&axis);
                let stalled = now - self.t_progress > p.stall_time;
                if self.mode.has_feedback() && stalled && axial_back > 0.5 * p.force_cap {
                    if p.realign_time > 0.0 {
                        self.tilt *= (-dt / p.realign_time).exp();
                    }
                    if now - self.t_progress > 2.0 * p.stall_time {
                        self.depth_ref = seen.depth - p.retreat * mm;
                        self.lead = p.lead * mm;
                        self.t_progress = now;
                    }
                }
                if self.mode.has_feedback() && axial_back > p.force_cap {
                    self.lead = (self.lead - p.escalation_rate * mm * dt * 4.0).max(0.0);
                } else if stalled {
                    self.lead += p.escalation_rate * mm * dt;
                }
                let cap = seen.depth + self.lead;
                self.depth_ref = (self.depth_ref + p.insert_speed * mm * dt).min(cap).max(self.depth_ref.min(cap));
                self.depth_ref = self.depth_ref.min(task.hole_depth + p.lead * mm);
            }
        }

        if self.mode.has_feedback() {
            let lateral_felt = seen.force - axis * seen.force.dot(&axis);
            let local = hole.orientation.inverse_transform_vector(&lateral_felt) * (p.compliance * mm);
            let limit = p.compliance_limit * mm;
            let goal = Vector3::new(local.x, local.y, 0.0);
            let goal = if goal.norm() > limit { goal * (limit / goal.norm()) } else { goal };
            // First-order approach to the compliance goal over the latency.
            let tau = self.profile.latency.max(dt);
            self.comply += (goal - self.comply) * (dt / tau).min(1.0);
        }

        let tilt = UnitQuaternion::from_axis_angle(&self.tilt_axis, self.tilt);
        self.orientation = hole.orientation * tilt * hole.orientation.inverse() * self.aligned;
        let tip_ref = hole.position + hole.orientation * (lateral + self.comply + Vector3::z() * self.depth_ref);
        let p_ref = tip_ref - leader.pose.z_axis() * task.peg_length;

        let h = &self.profile.hand;
        let v = leader.twist.fixed_rows::<3>(0).into_owned();
        let w = leader.twist.fixed_rows::<3>(3).into_owned();
        let force = (p_ref - leader.pose.position) * h.stiffness - v * h.damping + self.tremor_force(now);
        let moment = orientation_error(&self.orientation, &leader.pose.orientation) * h.rot_stiffness - w * h.rot_damping;
        let mut wrench = Vector6::zeros();
        wrench.fixed_rows_mut::<3>(0).copy_from(&force);
        wrench.fixed_rows_mut::<3>(3).copy_from(&moment);
        OperatorWrench::clamped(wrench, &p.limits)
    }
}
