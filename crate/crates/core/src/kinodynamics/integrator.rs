use nalgebra::DVector;

use super::dynamics::ArmDynamics;
use super::{check_finite, check_len, DynamicsError, JointState, ManipulatorModel};
use crate::scalar::Real;

/// Largest accepted integration step, s.
pub const MAX_DT: f64 = 2e-3;

/// Result of one integration step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepReport<T: Real> {
    pub state: JointState<T>,
    /// Joints that hit a position limit during the step.
    pub clamped: Vec<usize>,
}

/// Semi-implicit Euler step of the joint-space dynamics.
pub fn step<T: Real>(
    model: &ManipulatorModel<T>,
    state: &JointState<T>,
    tau_c: &DVector<T>,
    tau_ext: &DVector<T>,
    dt: T,
) -> Result<StepReport<T>, DynamicsError> {
    let dyn_ = ArmDynamics::compute(model, &state.q, &state.dq)?;
    step_with(model, &dyn_, state, tau_c, tau_ext, dt)
}

/// Same as [`step`] with dynamics already evaluated at `state`.
pub fn step_with<T: Real>(
    model: &ManipulatorModel<T>,
    dynamics: &ArmDynamics<T>,
    state: &JointState<T>,
    tau_c: &DVector<T>,
    tau_ext: &DVector<T>,
    dt: T,
) -> Result<StepReport<T>, DynamicsError> {
    if !(dt > T::zero() && dt <= T::lit(MAX_DT)) || !dt.finite() {
        return Err(DynamicsError::InvalidTimestep(dt.as_f64()));
    }
    check_len(model.n(), state.q.len())?;
    check_finite("q", &state.q)?;
    check_finite("dq", &state.dq)?;
    check_finite("tau_c", tau_c)?;
    check_finite("tau_ext", tau_ext)?;

    let ddq = dynamics.acceleration(tau_c, tau_ext)?;
    check_finite("ddq", &ddq)?;
    let mut dq = &state.dq + &ddq * dt;
    let mut q = &state.q + &dq * dt;

    let mut clamped = Vec::new();
    for (i, link) in model.links.iter().enumerate() {
        if link.continuous {
            continue;
        }
        if q[i] > link.upper {
            q[i] = link.upper;
            dq[i] = T::zero();
            clamped.push(i);
        } else if q[i] < link.lower {
            q[i] = link.lower;
            dq[i] = T::zero();
            clamped.push(i);
        }
    }
    if !clamped.is_empty() {
        log::debug!("joint limit clamp on {:?} at t = {}", clamped, state.t.as_f64());
    }

    Ok(StepReport {
        state: JointState {
            q,
            dq,
            ddq,
            t: state.t + dt,
        },
        clamped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinodynamics::model::panda_nominal;

    #[test]
    fn zero_acceleration_advances_linearly() {
        let mut model = panda_nominal::<f64>();
        model.gravity = nalgebra::Vector3::zeros();
        let q0 = DVector::from_vec(vec![0.1, -0.3, 0.0, -2.0, 0.0, 1.6, 0.4]);
        let state = JointState::new(q0.clone(), DVector::zeros(7), 0.0);
        // zero velocity and zero torque: nothing moves and time advances
        let r = step(&model, &state, &DVector::zeros(7), &DVector::zeros(7), 1e-3).unwrap();
        assert_eq!(r.state.q, q0);
        assert!((r.state.t - 1e-3).abs() < 1e-18);

        // torque that exactly cancels the bias keeps ddq = 0 with motion
        let dq = DVector::from_vec(vec![0.2, 0.1, -0.1, 0.05, 0.0, 0.1, 0.3]);
        let state = JointState::new(q0.clone(), dq.clone(), 0.0);
        let c = crate::kinodynamics::bias_forces(&model, &q0, &dq).unwrap();
        let r = step(&model, &state, &c, &DVector::zeros(7), 1e-3).unwrap();
        assert!((&r.state.q - (&q0 + &dq * 1e-3)).norm() < 1e-15);
    }

    #[test]
    fn clamps_at_upper_limit() {
        let model = panda_nominal::<f64>();
        let mut q = DVector::from_vec(vec![0.0, -0.3, 0.0, -2.0, 0.0, 1.6, 0.4]);
        q[0] = model.links[0].upper;
        let mut dq = DVector::zeros(7);
        dq[0] = 0.5;
        let g = crate::kinodynamics::gravity_torques(&model, &q).unwrap();
        let r = step(&model, &JointState::new(q, dq, 0.0), &g, &DVector::zeros(7), 1e-3).unwrap();
        assert_eq!(r.state.q[0], model.links[0].upper);
        assert_eq!(r.state.dq[0], 0.0);
        assert_eq!(r.clamped, vec![0]);
    }

    #[test]
    fn rejects_bad_timestep_and_nan() {
        let model = panda_nominal::<f64>();
        let s = JointState::new(DVector::from_element(7, -0.5), DVector::zeros(7), 0.0);
        let z = DVector::zeros(7);
        assert!(matches!(step(&model, &s, &z, &z, 0.0), Err(DynamicsError::InvalidTimestep(_))));
        assert!(matches!(step(&model, &s, &z, &z, 3e-3), Err(DynamicsError::InvalidTimestep(_))));
        let mut bad = z.clone();
        bad[1] = f64::INFINITY;
        assert_eq!(step(&model, &s, &bad, &z, 1e-3).unwrap_err(), DynamicsError::NonFinite("tau_c"));
    }
}
