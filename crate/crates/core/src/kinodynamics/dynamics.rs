use nalgebra::{DMatrix, DVector, Matrix3, Matrix6, Vector3, Vector6};

use super::kinematics::ChainKinematics;
use super::{check_finite, check_len, DynamicsError, ManipulatorModel};
use crate::scalar::Real;

fn skew<T: Real>(v: &Vector3<T>) -> Matrix3<T> {
    Matrix3::new(T::zero(), -v.z, v.y, v.z, T::zero(), -v.x, -v.y, v.x, T::zero())
}

/// Recursive Newton-Euler over precomputed base-frame geometry. With
/// `gravity` false the base is not accelerated.
pub(crate) fn rnea<T: Real>(
    model: &ManipulatorModel<T>,
    kin: &ChainKinematics<T>,
    dq: &DVector<T>,
    ddq: &DVector<T>,
    gravity: bool,
) -> DVector<T> {
    let n = model.n();
    let mut forces = Vec::with_capacity(n);
    let mut moments = Vec::with_capacity(n);

    let base_acc = if gravity { -model.gravity } else { Vector3::zeros() };
    let mut w = Vector3::zeros();
    let mut dw = Vector3::zeros();
    let mut acc = base_acc;
    let mut prev_point = kin.axis_points[0];
    for i in 0..n {
        let z = kin.axes[i];
        let p = kin.axis_points[i];
        let r = p - prev_point;
        acc += dw.cross(&r) + w.cross(&w.cross(&r));
        let w_next = w + z * dq[i];
        dw = dw + z * ddq[i] + w.cross(&(z * dq[i]));
        w = w_next;
        prev_point = p;

        let rc = kin.coms[i] - p;
        let acc_com = acc + dw.cross(&rc) + w.cross(&w.cross(&rc));
        let mass = model.links[i].mass;
        let inertia = kin.inertias[i];
        forces.push(acc_com * mass);
        moments.push(inertia * dw + w.cross(&(inertia * w)));
    }

    let mut tau = DVector::zeros(n);
    let mut f_child: Vector3<T> = Vector3::zeros();
    let mut n_child: Vector3<T> = Vector3::zeros();
    for i in (0..n).rev() {
        let p = kin.axis_points[i];
        let mut moment = moments[i] + (kin.coms[i] - p).cross(&forces[i]) + n_child;
        if i + 1 < n {
            moment += (kin.axis_points[i + 1] - p).cross(&f_child);
        }
        let force = forces[i] + f_child;
        tau[i] = kin.axes[i].dot(&moment) + model.links[i].armature * ddq[i];
        f_child = force;
        n_child = moment;
    }
    tau
}

/// Composite-rigid-body mass matrix using base-frame spatial inertias.
pub(crate) fn crba<T: Real>(model: &ManipulatorModel<T>, kin: &ChainKinematics<T>) -> DMatrix<T> {
    let n = model.n();
    let mut motion = Vec::with_capacity(n);
    for i in 0..n {
        let mut s = Vector6::zeros();
        s.fixed_rows_mut::<3>(0).copy_from(&kin.axes[i]);
        s.fixed_rows_mut::<3>(3)
            .copy_from(&kin.axis_points[i].cross(&kin.axes[i]));
        motion.push(s);
    }

    let mut m = DMatrix::zeros(n, n);
    let mut composite: Matrix6<T> = Matrix6::zeros();
    for j in (0..n).rev() {
        let mass = model.links[j].mass;
        let c = skew(&kin.coms[j]);
        let mut body = Matrix6::zeros();
        body.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&(kin.inertias[j] + c.transpose() * c * mass));
        body.fixed_view_mut::<3, 3>(0, 3).copy_from(&(c * mass));
        body.fixed_view_mut::<3, 3>(3, 0).copy_from(&(c.transpose() * mass));
        body.fixed_view_mut::<3, 3>(3, 3)
            .copy_from(&(Matrix3::identity() * mass));
        composite += body;

        let force = composite * motion[j];
        for i in 0..=j {
            let v = motion[i].dot(&force);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    for (i, link) in model.links.iter().enumerate() {
        m[(i, i)] += link.armature;
    }
    m
}

pub fn mass_matrix<T: Real>(
    model: &ManipulatorModel<T>,
    q: &DVector<T>,
) -> Result<DMatrix<T>, DynamicsError> {
    let kin = ChainKinematics::compute(model, q)?;
    Ok(crba(model, &kin))
}

/// Coriolis and centrifugal generalized forces `c(q, dq)`.
pub fn bias_forces<T: Real>(
    model: &ManipulatorModel<T>,
    q: &DVector<T>,
    dq: &DVector<T>,
) -> Result<DVector<T>, DynamicsError> {
    check_len(model.n(), dq.len())?;
    let kin = ChainKinematics::compute(model, q)?;
    Ok(rnea(model, &kin, dq, &DVector::zeros(model.n()), false))
}

pub fn gravity_torques<T: Real>(
    model: &ManipulatorModel<T>,
    q: &DVector<T>,
) -> Result<DVector<T>, DynamicsError> {
    let n = model.n();
    let kin = ChainKinematics::compute(model, q)?;
    Ok(rnea(model, &kin, &DVector::zeros(n), &DVector::zeros(n), true))
}

/// `M(q) ddq + c(q, dq) + g(q)`.
pub fn inverse_dynamics<T: Real>(
    model: &ManipulatorModel<T>,
    q: &DVector<T>,
    dq: &DVector<T>,
    ddq: &DVector<T>,
) -> Result<DVector<T>, DynamicsError> {
    check_len(model.n(), dq.len())?;
    check_len(model.n(), ddq.len())?;
    let kin = ChainKinematics::compute(model, q)?;
    Ok(rnea(model, &kin, dq, ddq, true))
}

/// Everything the control laws and the integrator need at one state,
/// computed from a single pass over the chain.
#[derive(Clone, Debug)]
pub struct ArmDynamics<T: Real> {
    pub kin: ChainKinematics<T>,
    pub mass: DMatrix<T>,
    pub coriolis: DVector<T>,
    pub gravity: DVector<T>,
}

impl<T: Real> ArmDynamics<T> {
    pub fn compute(
        model: &ManipulatorModel<T>,
        q: &DVector<T>,
        dq: &DVector<T>,
    ) -> Result<Self, DynamicsError> {
        check_len(model.n(), dq.len())?;
        let n = model.n();
        let kin = ChainKinematics::compute(model, q)?;
        let zeros = DVector::zeros(n);
        let coriolis = rnea(model, &kin, dq, &zeros, false);
        let gravity = rnea(model, &kin, &zeros, &zeros, true);
        let mass = crba(model, &kin);
        Ok(Self {
            kin,
            mass,
            coriolis,
            gravity,
        })
    }

    /// `M^-1 (tau_c + tau_ext - c - g)`.
    pub fn acceleration(
        &self,
        tau_c: &DVector<T>,
        tau_ext: &DVector<T>,
    ) -> Result<DVector<T>, DynamicsError> {
        let n = self.mass.nrows();
        check_len(n, tau_c.len())?;
        check_len(n, tau_ext.len())?;
        let rhs = tau_c + tau_ext - &self.coriolis - &self.gravity;
        let chol = self
            .mass
            .clone()
            .cholesky()
            .ok_or(DynamicsError::SingularMassMatrix)?;
        Ok(chol.solve(&rhs))
    }
}

pub fn forward_dynamics<T: Real>(
    model: &ManipulatorModel<T>,
    q: &DVector<T>,
    dq: &DVector<T>,
    tau_c: &DVector<T>,
    tau_ext: &DVector<T>,
) -> Result<DVector<T>, DynamicsError> {
    check_finite("q", q)?;
    check_finite("dq", dq)?;
    check_finite("tau_c", tau_c)?;
    check_finite("tau_ext", tau_ext)?;
    ArmDynamics::compute(model, q, dq)?.acceleration(tau_c, tau_ext)
}

/// Kinetic energy `dq^T M dq / 2`.
pub fn kinetic_energy<T: Real>(
    model: &ManipulatorModel<T>,
    q: &DVector<T>,
    dq: &DVector<T>,
) -> Result<T, DynamicsError> {
    let m = mass_matrix(model, q)?;
    Ok(dq.dot(&(m * dq)) * T::lit(0.5))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinodynamics::model::{panda_nominal, DhConvention, Link};
    use nalgebra::Isometry3;

    /// One link of length 0.5 turning about base z with gravity along -y, so
    /// q = 0 is horizontal and q = -pi/2 hangs straight down.
    fn pendulum(i_com: f64) -> ManipulatorModel<f64> {
        let link = Link {
            a: 0.5,
            d: 0.0,
            alpha: 0.0,
            theta_offset: 0.0,
            mass: 1.0,
            com: Vector3::zeros(),
            inertia: Matrix3::from_diagonal(&Vector3::new(i_com, i_com, i_com)),
            armature: 0.0,
            lower: -10.0,
            upper: 10.0,
            torque_limit: 100.0,
            continuous: true,
        };
        ManipulatorModel::new(
            "pendulum",
            DhConvention::Standard,
            vec![link],
            Isometry3::identity(),
            Vector3::new(0.0, -9.81, 0.0),
        )
        .unwrap()
    }

    fn q(v: f64) -> DVector<f64> {
        DVector::from_element(1, v)
    }

    #[test]
    fn pendulum_mass_matches_parallel_axis() {
        let m = mass_matrix(&pendulum(0.02), &q(0.3)).unwrap();
        assert!((m[(0, 0)] - (1.0 * 0.25 + 0.02)).abs() < 1e-14);
    }

    #[test]
    fn pendulum_gravity_torque() {
        let model = pendulum(0.02);
        let horizontal = gravity_torques(&model, &q(0.0)).unwrap();
        assert!((horizontal[0].abs() - 4.905).abs() < 1e-12);
        let hanging = gravity_torques(&model, &q(-std::f64::consts::FRAC_PI_2)).unwrap();
        assert!(hanging[0].abs() < 1e-12);
    }

    #[test]
    fn zero_gravity_vector_gives_zero_torque() {
        let mut model = panda_nominal::<f64>();
        model.gravity = Vector3::zeros();
        let q = DVector::from_vec(vec![0.4, -0.3, 0.2, -1.7, 0.9, 1.2, -0.5]);
        assert_eq!(gravity_torques(&model, &q).unwrap().norm(), 0.0);
    }

    #[test]
    fn single_joint_has_no_coriolis() {
        let c = bias_forces(&pendulum(0.02), &q(0.7), &q(3.0)).unwrap();
        assert_eq!(c[0], 0.0);
    }

    #[test]
    fn zero_velocity_gives_zero_bias() {
        let model = panda_nominal::<f64>();
        let q = DVector::from_vec(vec![0.4, -0.3, 0.2, -1.7, 0.9, 1.2, -0.5]);
        assert_eq!(bias_forces(&model, &q, &DVector::zeros(7)).unwrap().norm(), 0.0);
    }

    #[test]
    fn gravity_compensation_holds_still() {
        let model = panda_nominal::<f64>();
        let q = DVector::from_vec(vec![0.4, -0.3, 0.2, -1.7, 0.9, 1.2, -0.5]);
        let g = gravity_torques(&model, &q).unwrap();
        let ddq = forward_dynamics(&model, &q, &DVector::zeros(7), &g, &DVector::zeros(7)).unwrap();
        assert!(ddq.norm() < 1e-10);
    }

    #[test]
    fn rejects_non_finite_input() {
        let model = panda_nominal::<f64>();
        let mut q = DVector::zeros(7);
        q[2] = f64::NAN;
        let z = DVector::zeros(7);
        assert_eq!(
            forward_dynamics(&model, &q, &z, &z, &z).unwrap_err(),
            DynamicsError::NonFinite("q")
        );
    }

    #[test]
    fn mass_matrix_in_single_precision_is_symmetric() {
        let model = panda_nominal::<f32>();
        let q = DVector::from_vec(vec![0.4f32, -0.3, 0.2, -1.7, 0.9, 1.2, -0.5]);
        let m = mass_matrix(&model, &q).unwrap();
        assert!((&m - m.transpose()).abs().max() < 1e-6);
        assert!(m.cholesky().is_some());
    }
}
