use nalgebra::{Vector2, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use super::task::{TaskConfig, TaskGeometry};
use super::EnvError;
use crate::kinodynamics::{Pose, Wrench, WrenchFrame};

/// Penalty contact parameters. Stiffness and damping are per sample point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContactParams {
    /// N/m.
    pub k_n: f64,
    /// N·s/m.
    pub d_n: f64,
    pub mu: f64,
    /// Points on each sampled peg ring and on each hole edge.
    pub sample_count: usize,
    /// Extra rings on the peg side above the bottom rim.
    pub lateral_rings: usize,
    /// Sample the hole mouth edges against the peg body.
    pub edge_samples: bool,
    /// Tangential stiffness of the stick phase, N/m.
    pub k_t: f64,
    /// Slip speed below which the stateless model regularizes friction, m/s.
    pub slip_velocity: f64,
}

impl Default for ContactParams {
    fn default() -> Self {
        Self {
            k_n: 1.0e5,
            d_n: 200.0,
            mu: 0.3,
            sample_count: 24,
            lateral_rings: 2,
            edge_samples: true,
            k_t: 5.0e4,
            slip_velocity: 1e-3,
        }
    }
}

impl ContactParams {
    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |m: &str| Err(EnvError::InvalidContact(m.into()));
        if !(self.k_n > 0.0) || !self.k_n.is_finite() {
            return bad("k_n must be positive");
        }
        if !(self.d_n >= 0.0) || !(self.mu >= 0.0) || !(self.k_t >= 0.0) {
            return bad("d_n, mu and k_t must be non-negative");
        }
        if self.sample_count < 16 {
            return bad("sample_count must be at least 16");
        }
        if !(self.slip_velocity > 0.0) {
            return bad("slip_velocity must be positive");
        }
        Ok(())
    }
}

/// Net contact result of one evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContactReport {
    /// Wrench on the peg about the end-effector origin, end-effector axes.
    pub wrench: Wrench<f64>,
    /// Same wrench in base axes.
    pub wrench_base: Wrench<f64>,
    pub active_points: usize,
    /// m.
    pub max_penetration: f64,
    /// Power removed by damping and friction, W (non-negative).
    pub dissipation: f64,
}

#[derive(Clone, Copy, Debug)]
enum Source {
    /// Point fixed on the peg, end-effector frame.
    Peg(Vector3<f64>),
    /// Point fixed on the hole edge, hole frame.
    Edge(Vector3<f64>),
}

/// Friction memory for the stick-slip model, one anchor per sample.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FrictionState {
    anchors: Vec<Option<Vector3<f64>>>,
}

impl FrictionState {
    pub fn reset(&mut self) {
        self.anchors.iter_mut().for_each(|a| *a = None);
    }

    pub fn sticking(&self) -> usize {
        self.anchors.iter().filter(|a| a.is_some()).count()
    }
}

/// Sampled peg/hole pair with precomputed sample points.
#[derive(Clone, Debug)]
pub struct ContactModel {
    pub geometry: TaskGeometry,
    pub params: ContactParams,
    samples: Vec<Source>,
}

struct Hit {
    point: Vector3<f64>,
    normal: Vector3<f64>,
    depth: f64,
}

/// Closest point of the hole boundary profile to `(d, z)`, with `d` the
/// outward wall distance and `z` the depth below the mouth. The profile runs
/// along the top plate, the chamfer, the wall and the bottom.
fn profile_closest(d: f64, z: f64, chamfer: f64, depth: f64) -> (f64, f64) {
    let mut best = (f64::INFINITY, d, z);
    let mut consider = |cd: f64, cz: f64| {
        let dist = (cd - d).hypot(cz - z);
        if dist < best.0 {
            best = (dist, cd, cz);
        }
    };
    consider(d.max(chamfer), 0.0);
    if chamfer > 0.0 {
        let t = (((chamfer - d) + z) / (2.0 * chamfer)).clamp(0.0, 1.0);
        consider(chamfer * (1.0 - t), chamfer * t);
    }
    consider(0.0, z.clamp(chamfer, depth));
    consider(d.min(0.0), depth);
    (best.1, best.2)
}

impl ContactModel {
    pub fn new(geometry: TaskGeometry, params: ContactParams) -> Result<Self, EnvError> {
        params.validate()?;
        let n = params.sample_count;
        let l = geometry.peg_length;
        let mut samples = Vec::new();
        let rim = geometry.peg.boundary_points(n);
        for p in &rim {
            samples.push(Source::Peg(Vector3::new(p.x, p.y, l)));
        }
        samples.push(Source::Peg(Vector3::new(0.0, 0.0, l)));
        for p in geometry.peg.boundary_points(n / 2) {
            samples.push(Source::Peg(Vector3::new(0.5 * p.x, 0.5 * p.y, l)));
        }
        let pitch = l / (params.lateral_rings as f64 + 2.0);
        for k in 1..=params.lateral_rings {
            for p in &rim {
                samples.push(Source::Peg(Vector3::new(p.x, p.y, l - k as f64 * pitch)));
            }
        }
        if params.edge_samples {
            for p in geometry.hole.boundary_points(n) {
                samples.push(Source::Edge(Vector3::new(p.x, p.y, geometry.chamfer)));
            }
            if geometry.chamfer > 0.0 {
                for p in geometry.hole.offset(geometry.chamfer).boundary_points(n) {
                    samples.push(Source::Edge(Vector3::new(p.x, p.y, 0.0)));
                }
            }
        }
        Ok(Self {
            geometry,
            params,
            samples,
        })
    }

    pub fn from_task(task: &TaskConfig, params: ContactParams) -> Result<Self, EnvError> {
        task.validate()?;
        Self::new(task.geometry(), params)
    }

    pub fn sample_len(&self) -> usize {
        self.samples.len()
    }

    /// Tip centre of the peg in world coordinates.
    pub fn peg_tip(&self, ee: &Pose<f64>) -> Vector3<f64> {
        ee.position + ee.orientation * Vector3::new(0.0, 0.0, self.geometry.peg_length)
    }

    /// World point expressed in the hole frame.
    pub fn to_hole(&self, p: &Vector3<f64>) -> Vector3<f64> {
        let h = &self.geometry.hole_pose;
        h.orientation.inverse_transform_vector(&(p - h.position))
    }

    /// False when every point of the peg is more than `guard` above the
    /// plate, so no sample can touch.
    pub fn may_touch(&self, ee: &Pose<f64>, guard: f64) -> bool {
        let g = &self.geometry;
        let tip = self.to_hole(&self.peg_tip(ee));
        let axis = g.hole_pose.orientation.inverse() * ee.orientation * Vector3::z();
        let sin_tilt = axis.x.hypot(axis.y).min(1.0);
        tip.z + g.peg.circumradius() * sin_tilt + guard >= 0.0 || axis.z <= 0.0
    }

    fn hit(&self, src: &Source, ee: &Pose<f64>) -> Option<Hit> {
        let g = &self.geometry;
        let hole = &g.hole_pose;
        match src {
            Source::Peg(s) => {
                let world = ee.position + ee.orientation * s;
                let p = hole.orientation.inverse_transform_vector(&(world - hole.position));
                if p.z <= 0.0 {
                    return None;
                }
                let (d, n2) = g.hole.distance(&Vector2::new(p.x, p.y));
                if p.z <= g.depth && d < (g.chamfer - p.z).max(0.0) {
                    return None;
                }
                let (cd, cz) = profile_closest(d, p.z, g.chamfer, g.depth);
                let (ud, uz) = (cd - d, cz - p.z);
                let depth = ud.hypot(uz);
                if depth <= 0.0 {
                    return None;
                }
                let local = Vector3::new(n2.x * ud, n2.y * ud, uz) / depth;
                Some(Hit {
                    point: world,
                    normal: hole.orientation * local,
                    depth,
                })
            }
            Source::Edge(e) => {
                let world = hole.position + hole.orientation * e;
                let s = ee.orientation.inverse_transform_vector(&(world - ee.position));
                if s.z < 0.0 || s.z > g.peg_length {
                    return None;
                }
                let (d, n2) = g.peg.distance(&Vector2::new(s.x, s.y));
                if d >= 0.0 {
                    return None;
                }
                let tip = g.peg_length - s.z;
                let (depth, local) = if -d <= tip {
                    (-d, Vector3::new(-n2.x, -n2.y, 0.0))
                } else {
                    (tip, Vector3::new(0.0, 0.0, -1.0))
                };
                Some(Hit {
                    point: world,
                    normal: ee.orientation * local,
                    depth,
                })
            }
        }
    }

    fn normal_force(&self, hit: &Hit, v: &Vector3<f64>) -> f64 {
        let rate = -v.dot(&hit.normal);
        (self.params.k_n * hit.depth + self.params.d_n * rate).max(0.0)
    }

    fn assemble(
        &self,
        ee: &Pose<f64>,
        force: Vector3<f64>,
        moment: Vector3<f64>,
        active: usize,
        max_pen: f64,
        dissipation: f64,
    ) -> ContactReport {
        let base = Wrench {
            force,
            moment,
            frame: WrenchFrame::Base,
        };
        ContactReport {
            wrench: base.rotated(&ee.orientation, WrenchFrame::EndEffector),
            wrench_base: base,
            active_points: active,
            max_penetration: max_pen,
            dissipation,
        }
    }

    /// Stateless evaluation with regularized Coulomb friction. `twist` is
    /// `[v; w]` of the end-effector origin in base axes.
    pub fn wrench(&self, ee: &Pose<f64>, twist: &Vector6<f64>) -> ContactReport {
        let v0 = twist.fixed_rows::<3>(0).into_owned();
        let w = twist.fixed_rows::<3>(3).into_owned();
        let (mut force, mut moment) = (Vector3::zeros(), Vector3::zeros());
        let (mut active, mut max_pen, mut diss) = (0, 0.0f64, 0.0);
        for src in &self.samples {
            let Some(hit) = self.hit(src, ee) else { continue };
            let r = hit.point - ee.position;
            let v = v0 + w.cross(&r);
            let fn_ = self.normal_force(&hit, &v);
            let vt = v - hit.normal * v.dot(&hit.normal);
            let speed = vt.norm();
            let ft = -vt * (self.params.mu * fn_ / speed.max(self.params.slip_velocity));
            let elastic = self.params.k_n * hit.depth;
            diss -= (fn_ - elastic) * hit.normal.dot(&v) + ft.dot(&v);
            let f = hit.normal * fn_ + ft;
            force += f;
            moment += r.cross(&f);
            active += 1;
            max_pen = max_pen.max(hit.depth);
        }
        self.assemble(ee, force, moment, active, max_pen, diss)
    }

    /// Evaluation with stick-slip friction: each touching sample keeps a
    /// tangential anchor that resists sliding up to the Coulomb limit.
    pub fn wrench_stateful(
        &self,
        ee: &Pose<f64>,
        twist: &Vector6<f64>,
        dt: f64,
        state: &mut FrictionState,
    ) -> ContactReport {
        if state.anchors.len() != self.samples.len() {
            state.anchors = vec![None; self.samples.len()];
        }
        let v0 = twist.fixed_rows::<3>(0).into_owned();
        let w = twist.fixed_rows::<3>(3).into_owned();
        let (mut force, mut moment) = (Vector3::zeros(), Vector3::zeros());
        let (mut active, mut max_pen, mut diss) = (0, 0.0f64, 0.0);
        let p = &self.params;
        for (src, anchor) in self.samples.iter().zip(state.anchors.iter_mut()) {
            let Some(hit) = self.hit(src, ee) else {
                *anchor = None;
                continue;
            };
            let r = hit.point - ee.position;
            let v = v0 + w.cross(&r);
            let fn_ = self.normal_force(&hit, &v);
            let vt = v - hit.normal * v.dot(&hit.normal);
            let mut s = anchor.unwrap_or_else(Vector3::zeros);
            s -= hit.normal * s.dot(&hit.normal);
            s += vt * dt;
            let limit = p.mu * fn_;
            let mut ft = -s * p.k_t;
            if ft.norm() > limit {
                let scale = if p.k_t > 0.0 { limit / (p.k_t * s.norm()) } else { 0.0 };
                s *= scale;
                ft = if speed_nonzero(&vt) { -vt.normalize() * limit } else { -s * p.k_t };
            }
            *anchor = Some(s);
            let elastic = p.k_n * hit.depth;
            diss -= (fn_ - elastic) * hit.normal.dot(&v);
            let f = hit.normal * fn_ + ft;
            force += f;
            moment += r.cross(&f);
            active += 1;
            max_pen = max_pen.max(hit.depth);
        }
        self.assemble(ee, force, moment, active, max_pen, diss)
    }
}

fn speed_nonzero(v: &Vector3<f64>) -> bool {
    v.norm() > 1e-12
}

/// Contact wrench on a peg held at `ee`, stateless friction.
pub fn contact_wrench(
    task: &TaskConfig,
    ee: &Pose<f64>,
    twist: &Vector6<f64>,
    params: &ContactParams,
) -> Result<Wrench<f64>, EnvError> {
    let finite = ee.position.iter().chain(ee.orientation.coords.iter()).chain(twist.iter()).all(|x| x.is_finite());
    if !finite {
        return Err(EnvError::NonFinite("peg pose"));
    }
    Ok(ContactModel::from_task(task, *params)?.wrench(ee, twist).wrench)
}
