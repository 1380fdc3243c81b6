use nalgebra::{Unit, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::task::TaskConfig;

/// Hole axis (pointing into the hole) tilted by an angle drawn uniformly in
/// `[0, noise]` rad about a uniformly drawn perpendicular axis.
pub fn surface_normal_estimate(task: &TaskConfig, noise: f64, seed: u64) -> Vector3<f64> {
    let axis = task.hole_pose().z_axis();
    perturb_axis(&axis, noise, seed)
}

pub fn perturb_axis(axis: &Vector3<f64>, noise: f64, seed: u64) -> Vector3<f64> {
    if noise <= 0.0 {
        return *axis;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let angle = rng.random_range(0.0..=noise);
    let phi = rng.random_range(0.0..std::f64::consts::TAU);
    let helper = if axis.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let e1 = axis.cross(&helper).normalize();
    let e2 = axis.cross(&e1);
    let perp = Unit::new_normalize(e1 * phi.cos() + e2 * phi.sin());
    UnitQuaternion::from_axis_angle(&perp, angle) * axis
}
