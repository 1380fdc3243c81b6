//! Leader and follower control laws: the bilateral baseline (gravity
//! compensated leader, joint-impedance follower) and the shared-autonomy
//! extensions (leader orientation assist, follower wiggle gated by the
//! autonomy level, moment-free force feedback).

mod autonomy;
mod gains;

use nalgebra::{DMatrix, DVector, UnitQuaternion, Unit, Vector3, Vector6};
use thiserror::Error;

use crate::kinodynamics::{
    orientation_error, ArmDynamics, DynamicsError, JointState, ManipulatorModel, Pose, Wrench,
    WrenchFrame,
};
use crate::scalar::Real;

pub use autonomy::{autonomy_condition, autonomy_level, AutonomyGate, AutonomyLevel};
pub use gains::*;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{0} is not a unit vector")]
    NonUnitVector(&'static str),
    #[error("invalid gains: {0}")]
    InvalidGains(String),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

fn check_len(expected: usize, got: usize) -> Result<(), ControlError> {
    if expected == got {
        Ok(())
    } else {
        Err(ControlError::DimensionMismatch { expected, got })
    }
}

/// Torque transmitted from the follower's contact to the leader, N·m.
#[derive(Clone, Debug, PartialEq)]
pub struct FeedbackTorque<T: Real>(pub DVector<T>);

/// `g(q) + c(q, dq) + tau_df`.
pub fn leader_baseline_torque<T: Real>(
    model: &ManipulatorModel<T>,
    state: &JointState<T>,
    tau_d_f: &DVector<T>,
) -> Result<DVector<T>, ControlError> {
    let dynamics = ArmDynamics::compute(model, &state.q, &state.dq)?;
    leader_baseline_with(&dynamics, tau_d_f)
}

pub fn leader_baseline_with<T: Real>(
    dynamics: &ArmDynamics<T>,
    tau_d_f: &DVector<T>,
) -> Result<DVector<T>, ControlError> {
    check_len(dynamics.gravity.len(), tau_d_f.len())?;
    Ok(&dynamics.gravity + &dynamics.coriolis + tau_d_f)
}

/// Rotation that aligns the leader z-axis with the target axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Alignment<T: Real> {
    /// `z_l x z_target`, not normalized. In the antiparallel case a unit
    /// axis orthogonal to `z_l`.
    pub axis: Vector3<T>,
    /// rad, in `[0, pi]`.
    pub angle: T,
    pub degenerate: bool,
}

fn check_unit<T: Real>(name: &'static str, v: &Vector3<T>) -> Result<(), ControlError> {
    if !v.iter().all(|x| x.finite()) || (v.norm() - T::one()).abs() > T::lit(1e-6) {
        return Err(ControlError::NonUnitVector(name));
    }
    Ok(())
}

pub fn alignment_axis_angle<T: Real>(
    z_l: &Vector3<T>,
    z_target: &Vector3<T>,
) -> Result<Alignment<T>, ControlError> {
    check_unit("z_l", z_l)?;
    check_unit("z_target", z_target)?;
    let axis = z_l.cross(z_target);
    let cos = z_l.dot(z_target).clamp(-T::one(), T::one());
    let angle = cos.acos();
    if axis.norm() <= T::lit(1e-12) && cos < T::zero() {
        let e1 = Vector3::x();
        let fallback = if z_l.cross(&e1).norm() > T::lit(1e-6) {
            z_l.cross(&e1)
        } else {
            z_l.cross(&Vector3::y())
        };
        return Ok(Alignment {
            axis: fallback.normalize(),
            angle: T::pi(),
            degenerate: true,
        });
    }
    Ok(Alignment {
        axis,
        angle,
        degenerate: false,
    })
}

/// Desired leader pose for the orientation assist.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AssistGoal<T: Real> {
    pub pose: Pose<T>,
    pub degenerate: bool,
}

/// Current pose with its orientation turned by the alignment rotation, so
/// that the goal frame's z-axis is `z_target` while the twist about that
/// axis is left to the operator.
pub fn leader_assist_goal<T: Real>(
    ee_pose: &Pose<T>,
    z_target: &Vector3<T>,
) -> Result<AssistGoal<T>, ControlError> {
    let z_l = ee_pose.z_axis();
    let align = alignment_axis_angle(&z_l, z_target)?;
    let norm = align.axis.norm();
    if align.angle == T::zero() || norm == T::zero() {
        return Ok(AssistGoal {
            pose: *ee_pose,
            degenerate: align.degenerate,
        });
    }
    let rot = UnitQuaternion::from_axis_angle(&Unit::new_unchecked(align.axis / norm), align.angle);
    Ok(AssistGoal {
        pose: Pose::new(ee_pose.position, rot * ee_pose.orientation),
        degenerate: align.degenerate,
    })
}

/// 6-D error `goal - current`: position difference and the rotation vector
/// of `R_goal R_current^T`, both in the base frame.
pub fn pose_error<T: Real>(goal: &Pose<T>, current: &Pose<T>) -> Vector6<T> {
    let mut e = Vector6::zeros();
    e.fixed_rows_mut::<3>(0)
        .copy_from(&(goal.position - current.position));
    e.fixed_rows_mut::<3>(3)
        .copy_from(&orientation_error(&goal.orientation, &current.orientation));
    e
}

fn rotate6<T: Real>(r: &UnitQuaternion<T>, v: &Vector6<T>) -> Vector6<T> {
    let mut out = Vector6::zeros();
    out.fixed_rows_mut::<3>(0)
        .copy_from(&(r * v.fixed_rows::<3>(0).into_owned()));
    out.fixed_rows_mut::<3>(3)
        .copy_from(&(r * v.fixed_rows::<3>(3).into_owned()));
    out
}

fn jt_times<T: Real>(j: &DMatrix<T>, w: &Vector6<T>) -> DVector<T> {
    j.tr_mul(&DVector::from_column_slice(w.as_slice()))
}

/// Assist wrench of the leader, end-effector axes:
/// `L1 [Kc (p_d - p_l) - Dc dp_l]`.
pub fn leader_assist_wrench<T: Real>(
    dynamics: &ArmDynamics<T>,
    dq: &DVector<T>,
    goal: &Pose<T>,
    gains: &LeaderGains<T>,
) -> Vector6<T> {
    let current = dynamics.kin.ee_pose();
    let to_ee = current.orientation.inverse();
    let err = rotate6(&to_ee, &pose_error(goal, &current));
    let j_ee = dynamics.kin.ee_jacobian();
    let twist = Vector6::from_column_slice((&j_ee * dq).as_slice());
    (gains.stiffness.component_mul(&err) - gains.damping.component_mul(&twist))
        .component_mul(&gains.selection)
}

/// Leader law with the orientation assist:
/// `J^T L1 [Kc (p_d - p_l) - Dc dp_l] + c + g + tau_df`.
pub fn leader_shared_torque<T: Real>(
    model: &ManipulatorModel<T>,
    state: &JointState<T>,
    goal: &Pose<T>,
    gains: &LeaderGains<T>,
    tau_d_f: &DVector<T>,
) -> Result<DVector<T>, ControlError> {
    let dynamics = ArmDynamics::compute(model, &state.q, &state.dq)?;
    leader_shared_with(&dynamics, &state.dq, goal, gains, tau_d_f)
}

pub fn leader_shared_with<T: Real>(
    dynamics: &ArmDynamics<T>,
    dq: &DVector<T>,
    goal: &Pose<T>,
    gains: &LeaderGains<T>,
    tau_d_f: &DVector<T>,
) -> Result<DVector<T>, ControlError> {
    let baseline = leader_baseline_with(dynamics, tau_d_f)?;
    check_len(baseline.len(), dq.len())?;
    let wrench = leader_assist_wrench(dynamics, dq, goal, gains);
    if wrench == Vector6::zeros() {
        return Ok(baseline);
    }
    Ok(baseline + jt_times(&dynamics.kin.ee_jacobian(), &wrench))
}

/// Joint impedance `Kq e + Dq de + c + g` with `e = q_d - q`.
pub fn follower_baseline_torque<T: Real>(
    model: &ManipulatorModel<T>,
    state: &JointState<T>,
    q_d: &DVector<T>,
    dq_d: &DVector<T>,
    gains: &FollowerGains<T>,
) -> Result<DVector<T>, ControlError> {
    let dynamics = ArmDynamics::compute(model, &state.q, &state.dq)?;
    follower_baseline_with(&dynamics, state, q_d, dq_d, gains)
}

pub fn follower_baseline_with<T: Real>(
    dynamics: &ArmDynamics<T>,
    state: &JointState<T>,
    q_d: &DVector<T>,
    dq_d: &DVector<T>,
    gains: &FollowerGains<T>,
) -> Result<DVector<T>, ControlError> {
    let n = state.q.len();
    for len in [q_d.len(), dq_d.len(), gains.stiffness.len(), gains.damping.len(), dynamics.gravity.len()] {
        check_len(n, len)?;
    }
    let e = q_d - &state.q;
    let de = dq_d - &state.dq;
    Ok(gains.stiffness.component_mul(&e)
        + gains.damping.component_mul(&de)
        + &dynamics.coriolis
        + &dynamics.gravity)
}

/// `f_j(t) = a_j sin(2 pi f_j t + phi_j)` per direction; rows with zero
/// amplitude are exactly zero.
pub fn wiggle_force<T: Real>(params: &WiggleParams<T>, t: T) -> Vector6<T> {
    Vector6::from_fn(|j, _| {
        let a = params.amplitude[j];
        if a == T::zero() {
            T::zero()
        } else {
            a * (T::two_pi() * params.frequency[j] * t + params.phase[j]).sin()
        }
    })
}

/// Follower law with the gated wiggle: the joint impedance plus
/// `eta J^T L2 f_ff`, with `f_ff` in end-effector axes.
#[allow(clippy::too_many_arguments)]
pub fn follower_shared_torque<T: Real>(
    model: &ManipulatorModel<T>,
    state: &JointState<T>,
    q_d: &DVector<T>,
    dq_d: &DVector<T>,
    gains: &FollowerGains<T>,
    eta: AutonomyLevel,
    f_ff: &Vector6<T>,
) -> Result<DVector<T>, ControlError> {
    let dynamics = ArmDynamics::compute(model, &state.q, &state.dq)?;
    follower_shared_with(&dynamics, state, q_d, dq_d, gains, eta, f_ff)
}

pub fn follower_shared_with<T: Real>(
    dynamics: &ArmDynamics<T>,
    state: &JointState<T>,
    q_d: &DVector<T>,
    dq_d: &DVector<T>,
    gains: &FollowerGains<T>,
    eta: AutonomyLevel,
    f_ff: &Vector6<T>,
) -> Result<DVector<T>, ControlError> {
    let baseline = follower_baseline_with(dynamics, state, q_d, dq_d, gains)?;
    if eta == AutonomyLevel::Manual {
        return Ok(baseline);
    }
    let masked = f_ff.component_mul(&gains.wiggle_selection);
    Ok(baseline + jt_times(&dynamics.kin.ee_jacobian(), &masked))
}

/// Joint torque fed back to the leader, `J^T L3 f_ext`. `jacobian` and the
/// wrench must share a frame (end-effector axes in the simulator).
pub fn feedback_torque<T: Real>(
    jacobian: &DMatrix<T>,
    f_ext: &Wrench<T>,
    selection: &Vector6<T>,
) -> Result<FeedbackTorque<T>, ControlError> {
    check_len(6, jacobian.nrows())?;
    let masked = f_ext.to_vector().component_mul(selection);
    Ok(FeedbackTorque(jt_times(jacobian, &masked)))
}

/// Contact wrench in end-effector axes as seen by the follower controller.
pub fn ee_frame_wrench<T: Real>(w: &Wrench<T>, ee: &Pose<T>) -> Wrench<T> {
    w.rotated(&ee.orientation, WrenchFrame::EndEffector)
}

/// Clips a command to the model's torque limits; returns the joints that
/// saturated.
pub fn clip_torque<T: Real>(model: &ManipulatorModel<T>, tau: &mut DVector<T>) -> Vec<usize> {
    let mut clipped = Vec::new();
    for (i, (t, link)) in tau.iter_mut().zip(&model.links).enumerate() {
        let lim = link.torque_limit;
        if *t > lim {
            *t = lim;
            clipped.push(i);
        } else if *t < -lim {
            *t = -lim;
            clipped.push(i);
        }
    }
    clipped
}
