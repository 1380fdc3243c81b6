use nalgebra::{DMatrix, DVector, Isometry3, Matrix3, UnitQuaternion, Vector3, Vector6};

use super::{check_len, DynamicsError, ManipulatorModel, Pose};
use crate::scalar::Real;

/// Base-frame geometry of every link at one configuration. Jacobians, the
/// mass matrix and the Newton-Euler recursion all read from this so the chain
/// is only composed once per configuration.
#[derive(Clone, Debug)]
pub struct ChainKinematics<T: Real> {
    /// Joint axes (unit) in the base frame.
    pub axes: Vec<Vector3<T>>,
    /// A point on each joint axis (joint frame origin), base frame.
    pub axis_points: Vec<Vector3<T>>,
    /// Link frames in the base frame.
    pub links: Vec<Isometry3<T>>,
    /// Link centres of mass, base frame.
    pub coms: Vec<Vector3<T>>,
    /// Link inertia about the centre of mass, base-frame axes.
    pub inertias: Vec<Matrix3<T>>,
    pub ee: Isometry3<T>,
}

impl<T: Real> ChainKinematics<T> {
    pub fn compute(model: &ManipulatorModel<T>, q: &DVector<T>) -> Result<Self, DynamicsError> {
        check_len(model.n(), q.len())?;
        let n = model.n();
        let mut axes = Vec::with_capacity(n);
        let mut axis_points = Vec::with_capacity(n);
        let mut links = Vec::with_capacity(n);
        let mut coms = Vec::with_capacity(n);
        let mut inertias = Vec::with_capacity(n);

        let mut frame = Isometry3::identity();
        for (link, &qi) in model.links.iter().zip(q.iter()) {
            let joint = frame * link.pre(model.convention);
            axes.push(joint.rotation * Vector3::z());
            axis_points.push(joint.translation.vector);
            let rz = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), qi + link.theta_offset);
            frame = joint * Isometry3::from_parts(nalgebra::Translation3::identity(), rz)
                * link.post(model.convention);
            let r = frame.rotation.to_rotation_matrix();
            coms.push(frame.transform_point(&link.com.into()).coords);
            inertias.push(r.matrix() * link.inertia * r.matrix().transpose());
            links.push(frame);
        }
        let ee = frame * model.tool;
        Ok(Self {
            axes,
            axis_points,
            links,
            coms,
            inertias,
            ee,
        })
    }

    pub fn ee_pose(&self) -> Pose<T> {
        Pose::from_isometry(&self.ee)
    }

    /// Geometric Jacobian of the end-effector origin; linear rows first, base
    /// frame.
    pub fn jacobian(&self) -> DMatrix<T> {
        let n = self.axes.len();
        let pe = self.ee.translation.vector;
        let mut j = DMatrix::zeros(6, n);
        for i in 0..n {
            let z = self.axes[i];
            let lin = z.cross(&(pe - self.axis_points[i]));
            j.fixed_view_mut::<3, 1>(0, i).copy_from(&lin);
            j.fixed_view_mut::<3, 1>(3, i).copy_from(&z);
        }
        j
    }

    /// Same Jacobian with both blocks expressed in end-effector axes.
    pub fn ee_jacobian(&self) -> DMatrix<T> {
        let rt = self.ee.rotation.inverse().to_rotation_matrix();
        let mut j = self.jacobian();
        for i in 0..j.ncols() {
            let lin: Vector3<T> = j.fixed_view::<3, 1>(0, i).into_owned();
            let ang: Vector3<T> = j.fixed_view::<3, 1>(3, i).into_owned();
            j.fixed_view_mut::<3, 1>(0, i).copy_from(&(rt * lin));
            j.fixed_view_mut::<3, 1>(3, i).copy_from(&(rt * ang));
        }
        j
    }
}

pub fn forward_kinematics<T: Real>(
    model: &ManipulatorModel<T>,
    q: &DVector<T>,
) -> Result<Pose<T>, DynamicsError> {
    Ok(ChainKinematics::compute(model, q)?.ee_pose())
}

pub fn geometric_jacobian<T: Real>(
    model: &ManipulatorModel<T>,
    q: &DVector<T>,
) -> Result<DMatrix<T>, DynamicsError> {
    Ok(ChainKinematics::compute(model, q)?.jacobian())
}

/// Jacobian about the end-effector origin in end-effector axes.
pub fn ee_jacobian<T: Real>(
    model: &ManipulatorModel<T>,
    q: &DVector<T>,
) -> Result<DMatrix<T>, DynamicsError> {
    Ok(ChainKinematics::compute(model, q)?.ee_jacobian())
}

/// End-effector twist `[v; w]` in the base frame.
pub fn ee_twist<T: Real>(
    model: &ManipulatorModel<T>,
    q: &DVector<T>,
    dq: &DVector<T>,
) -> Result<Vector6<T>, DynamicsError> {
    check_len(model.n(), dq.len())?;
    let j = geometric_jacobian(model, q)?;
    Ok(Vector6::from_column_slice((j * dq).as_slice()))
}

/// Rotation vector (axis * angle) of `to * from^-1`, base frame.
pub fn orientation_error<T: Real>(to: &UnitQuaternion<T>, from: &UnitQuaternion<T>) -> Vector3<T> {
    (to * from.inverse()).scaled_axis()
}

/// Damped least-squares inverse kinematics. Used to place the arms at a
/// start pose; not part of any control law.
pub fn inverse_kinematics<T: Real>(
    model: &ManipulatorModel<T>,
    target: &Pose<T>,
    seed: &DVector<T>,
    max_iter: usize,
) -> Result<DVector<T>, DynamicsError> {
    let mut q = seed.clone();
    check_len(model.n(), q.len())?;
    let lambda2 = T::lit(1e-4);
    let tol = T::lit(1e-10);
    for _ in 0..max_iter {
        let kin = ChainKinematics::compute(model, &q)?;
        let cur = kin.ee_pose();
        let mut err = Vector6::zeros();
        err.fixed_rows_mut::<3>(0).copy_from(&(target.position - cur.position));
        err.fixed_rows_mut::<3>(3)
            .copy_from(&orientation_error(&target.orientation, &cur.orientation));
        if err.norm() < tol {
            return Ok(q);
        }
        let j = kin.jacobian();
        let jjt = &j * j.transpose() + DMatrix::identity(6, 6) * lambda2;
        let step = j.transpose()
            * jjt
                .cholesky()
                .ok_or(DynamicsError::SingularMassMatrix)?
                .solve(&DVector::from_column_slice(err.as_slice()));
        q += step;
        for (qi, link) in q.iter_mut().zip(&model.links) {
            if !link.continuous {
                *qi = qi.clamp(link.lower, link.upper);
            }
        }
    }
    let kin = ChainKinematics::compute(model, &q)?;
    let cur = kin.ee_pose();
    let pos_err = (target.position - cur.position).norm();
    let rot_err = orientation_error(&target.orientation, &cur.orientation).norm();
    if pos_err > T::lit(1e-6) || rot_err > T::lit(1e-6) {
        return Err(DynamicsError::Unreachable);
    }
    Ok(q)
}
