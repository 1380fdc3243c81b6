//! Closed-loop checks of the control laws against simulated arm dynamics.

use nalgebra::{DVector, UnitQuaternion, Vector3};
use teleosim_core::controllers::*;
use teleosim_core::kinodynamics::*;

fn home() -> DVector<f64> {
    DVector::from_vec(vec![0.0, -0.4, 0.0, -2.2, 0.0, 1.8, 0.785])
}

#[test]
fn gravity_compensated_leader_holds_still() {
    let model = panda_nominal::<f64>();
    let mut s = JointState::at_rest(home());
    let z = DVector::zeros(7);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let tau = leader_baseline_torque(&model, &s, &z).unwrap();
        s = step(&model, &s, &tau, &z, 1e-3).unwrap().state;
        worst = worst.max(s.dq.norm());
    }
    assert!(worst < 1e-6, "max joint speed {worst}");
}

#[test]
fn leader_assist_aligns_tilted_tool() {
    let model = panda_nominal::<f64>();
    let mut s = JointState::at_rest(home());
    let z0 = forward_kinematics(&model, &s.q).unwrap().z_axis();
    let tilt = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), 0.2);
    let target = tilt * z0;
    let angle = |s: &JointState<f64>| {
        let z = forward_kinematics(&model, &s.q).unwrap().z_axis();
        z.dot(&target).clamp(-1.0, 1.0).acos()
    };
    assert!((angle(&s) - 0.2).abs() < 1e-9);

    let gains = LeaderGains::default();
    let zero = DVector::zeros(7);
    let mut settled_at = None;
    for k in 0..3000 {
        let pose = forward_kinematics(&model, &s.q).unwrap();
        let goal = leader_assist_goal(&pose, &target).unwrap().pose;
        let tau = leader_shared_torque(&model, &s, &goal, &gains, &zero).unwrap();
        s = step(&model, &s, &tau, &zero, 1e-3).unwrap().state;
        if angle(&s) < 0.01 {
            settled_at.get_or_insert(k);
        } else {
            settled_at = None;
        }
    }
    let k = settled_at.expect("did not converge within 3 s");
    assert!(k < 3000);
    assert!(angle(&s) < 0.01);
}

#[test]
fn follower_tracks_joint_step() {
    let model = panda_nominal::<f64>();
    let gains = FollowerGains::table_iv();
    let q0 = home();
    let mut qd = q0.clone();
    qd[3] += 0.1;
    let dqd = DVector::zeros(7);
    let zero = DVector::zeros(7);
    let mut s = JointState::at_rest(q0.clone());
    let mut last_outside = 0.0;
    for _ in 0..2000 {
        let tau = follower_baseline_torque(&model, &s, &qd, &dqd, &gains).unwrap();
        s = step(&model, &s, &tau, &zero, 1e-3).unwrap().state;
        if ((s.q[3] - q0[3]) - 0.1).abs() > 0.002 {
            last_outside = s.t;
        }
    }
    assert!(last_outside < 1.0, "settling time {last_outside} s");
}

#[test]
fn wiggle_closed_form_at_many_times() {
    let w = WiggleParams::<f64>::default();
    for i in 0..1000 {
        let t = i as f64 * 0.0371;
        let f = wiggle_force(&w, t);
        let rx = 0.766 * (2.0 * std::f64::consts::PI * 2.150 * t - 1.562).sin();
        let ry = 0.906 * (2.0 * std::f64::consts::PI * 2.160 * t + 0.610).sin();
        assert!((f[3] - rx).abs() < 1e-12);
        assert!((f[4] - ry).abs() < 1e-12);
        assert!(f[3].abs() <= 0.766 && f[4].abs() <= 0.906);
    }
}
