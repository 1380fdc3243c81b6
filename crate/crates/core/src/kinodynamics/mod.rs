//! Serial-chain kinematics and rigid-body dynamics
//! `M(q) ddq + c(q, dq) + g(q) = tau_c + tau_ext`, plus the fixed-step
//! integrator used for both arms.

mod dynamics;
mod integrator;
mod kinematics;
mod model;

use nalgebra::{DVector, Isometry3, Translation3, UnitQuaternion, Vector3, Vector6};
use thiserror::Error;

use crate::scalar::Real;

pub use dynamics::{
    bias_forces, forward_dynamics, gravity_torques, inverse_dynamics, kinetic_energy, mass_matrix,
    ArmDynamics,
};
pub use integrator::{step, step_with, StepReport, MAX_DT};
pub use kinematics::{
    ee_jacobian, ee_twist, forward_kinematics, geometric_jacobian, inverse_kinematics,
    orientation_error, ChainKinematics,
};
pub use model::{panda_nominal, panda_nominal_source, DhConvention, Link, LinkFile, ManipulatorModel, ModelFile};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("mass matrix is not positive definite")]
    SingularMassMatrix,
    #[error("invalid time step {0} s")]
    InvalidTimestep(f64),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("target pose is not reachable")]
    Unreachable,
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<(), DynamicsError> {
    if expected == got {
        Ok(())
    } else {
        Err(DynamicsError::DimensionMismatch { expected, got })
    }
}

pub(crate) fn check_finite<T: Real>(what: &'static str, v: &DVector<T>) -> Result<(), DynamicsError> {
    if v.iter().all(|x| x.finite()) {
        Ok(())
    } else {
        Err(DynamicsError::NonFinite(what))
    }
}

/// Instantaneous joint configuration of an arm.
#[derive(Clone, Debug, PartialEq)]
pub struct JointState<T: Real> {
    pub q: DVector<T>,
    pub dq: DVector<T>,
    pub ddq: DVector<T>,
    pub t: T,
}

impl<T: Real> JointState<T> {
    pub fn new(q: DVector<T>, dq: DVector<T>, t: T) -> Self {
        let n = q.len();
        Self {
            q,
            dq,
            ddq: DVector::zeros(n),
            t,
        }
    }

    pub fn at_rest(q: DVector<T>) -> Self {
        let n = q.len();
        Self::new(q, DVector::zeros(n), T::zero())
    }
}

/// Rigid pose: position in metres and unit-quaternion orientation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose<T: Real> {
    pub position: Vector3<T>,
    pub orientation: UnitQuaternion<T>,
}

impl<T: Real> Pose<T> {
    pub fn new(position: Vector3<T>, orientation: UnitQuaternion<T>) -> Self {
        Self {
            position,
            orientation,
        }
    }

    pub fn identity() -> Self {
        Self::new(Vector3::zeros(), UnitQuaternion::identity())
    }

    pub fn from_isometry(iso: &Isometry3<T>) -> Self {
        Self::new(iso.translation.vector, iso.rotation)
    }

    pub fn to_isometry(&self) -> Isometry3<T> {
        Isometry3::from_parts(Translation3::from(self.position), self.orientation)
    }

    /// z-axis of the frame, expressed in the parent frame.
    pub fn z_axis(&self) -> Vector3<T> {
        self.orientation * Vector3::z()
    }
}

/// Frame a [`Wrench`] is expressed in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WrenchFrame {
    Base,
    EndEffector,
}

/// Force (N) and moment (N·m) about the end-effector origin.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Wrench<T: Real> {
    pub force: Vector3<T>,
    pub moment: Vector3<T>,
    pub frame: WrenchFrame,
}

impl<T: Real> Wrench<T> {
    pub fn zero(frame: WrenchFrame) -> Self {
        Self {
            force: Vector3::zeros(),
            moment: Vector3::zeros(),
            frame,
        }
    }

    pub fn from_vector(v: &Vector6<T>, frame: WrenchFrame) -> Self {
        Self {
            force: v.fixed_rows::<3>(0).into_owned(),
            moment: v.fixed_rows::<3>(3).into_owned(),
            frame,
        }
    }

    pub fn to_vector(&self) -> Vector6<T> {
        let mut v = Vector6::zeros();
        v.fixed_rows_mut::<3>(0).copy_from(&self.force);
        v.fixed_rows_mut::<3>(3).copy_from(&self.moment);
        v
    }

    pub fn is_finite(&self) -> bool {
        self.force.iter().chain(self.moment.iter()).all(|x| x.finite())
    }

    /// Re-expresses an end-effector-frame wrench in the base frame (or the
    /// reverse) given the end-effector orientation.
    pub fn rotated(&self, ee_orientation: &UnitQuaternion<T>, to: WrenchFrame) -> Self {
        if self.frame == to {
            return *self;
        }
        let r = match to {
            WrenchFrame::Base => *ee_orientation,
            WrenchFrame::EndEffector => ee_orientation.inverse(),
        };
        Self {
            force: r * self.force,
            moment: r * self.moment,
            frame: to,
        }
    }
}
