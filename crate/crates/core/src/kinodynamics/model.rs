use nalgebra::{DVector, Isometry3, Matrix3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::DynamicsError;
use crate::scalar::Real;

/// Denavit-Hartenberg convention used to interpret the link parameters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DhConvention {
    /// `Rz(theta) Tz(d) Tx(a) Rx(alpha)`; joint `i` turns about the z-axis of
    /// frame `i-1`.
    #[default]
    Standard,
    /// Craig's convention, `Rx(alpha) Tx(a) Rz(theta) Tz(d)`; joint `i` turns
    /// about the z-axis of frame `i`.
    Modified,
}

/// One revolute link of a serial chain.
#[derive(Clone, Debug, PartialEq)]
pub struct Link<T: Real> {
    pub a: T,
    pub d: T,
    pub alpha: T,
    pub theta_offset: T,
    pub mass: T,
    /// Centre of mass in the link frame.
    pub com: Vector3<T>,
    /// Rotational inertia about the centre of mass, link-frame axes.
    pub inertia: Matrix3<T>,
    /// Reflected rotor inertia on the joint axis, kg·m².
    pub armature: T,
    pub lower: T,
    pub upper: T,
    pub torque_limit: T,
    /// Continuous joints are not clamped and are 2π-periodic.
    pub continuous: bool,
}

impl<T: Real> Link<T> {
    /// Fixed transform between the parent frame and the joint frame (whose
    /// z-axis is the rotation axis).
    pub(crate) fn pre(&self, convention: DhConvention) -> Isometry3<T> {
        match convention {
            DhConvention::Standard => Isometry3::identity(),
            DhConvention::Modified => {
                let rx = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), self.alpha);
                Isometry3::from_parts(Translation3::identity(), rx)
                    * Isometry3::translation(self.a, T::zero(), T::zero())
            }
        }
    }

    /// Fixed transform between the rotated joint frame and the link frame.
    pub(crate) fn post(&self, convention: DhConvention) -> Isometry3<T> {
        match convention {
            DhConvention::Standard => {
                let rx = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), self.alpha);
                Isometry3::translation(self.a, T::zero(), self.d)
                    * Isometry3::from_parts(Translation3::identity(), rx)
            }
            DhConvention::Modified => Isometry3::translation(T::zero(), T::zero(), self.d),
        }
    }
}

/// Kinematic and inertial description of an n-DoF serial arm with revolute
/// joints.
#[derive(Clone, Debug, PartialEq)]
pub struct ManipulatorModel<T: Real> {
    pub name: String,
    pub convention: DhConvention,
    pub links: Vec<Link<T>>,
    /// Last link frame to end-effector frame.
    pub tool: Isometry3<T>,
    pub gravity: Vector3<T>,
}

impl<T: Real> ManipulatorModel<T> {
    pub fn new(
        name: impl Into<String>,
        convention: DhConvention,
        links: Vec<Link<T>>,
        tool: Isometry3<T>,
        gravity: Vector3<T>,
    ) -> Result<Self, DynamicsError> {
        let model = Self {
            name: name.into(),
            convention,
            links,
            tool,
            gravity,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn n(&self) -> usize {
        self.links.len()
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        let invalid = |msg: String| Err(DynamicsError::InvalidModel(msg));
        if self.links.is_empty() {
            return invalid("model has no links".into());
        }
        if !self.gravity.iter().all(|g| g.finite()) {
            return invalid("gravity vector is not finite".into());
        }
        for (i, link) in self.links.iter().enumerate() {
            let scalars = [link.a, link.d, link.alpha, link.theta_offset, link.mass, link.torque_limit];
            if !scalars.iter().all(|x| x.finite()) || !link.com.iter().all(|x| x.finite()) {
                return invalid(format!("link {i}: non-finite parameter"));
            }
            if !link.armature.finite() || link.armature < T::zero() {
                return invalid(format!("link {i}: armature must be non-negative"));
            }
            if link.mass <= T::zero() {
                return invalid(format!("link {i}: mass must be positive"));
            }
            if link.torque_limit <= T::zero() {
                return invalid(format!("link {i}: torque limit must be positive"));
            }
            if !(link.lower < link.upper) {
                return invalid(format!("link {i}: joint limits must satisfy lower < upper"));
            }
            let asym = (link.inertia - link.inertia.transpose()).abs().max();
            if asym > T::lit(1e-12) * (T::one() + link.inertia.abs().max()) {
                return invalid(format!("link {i}: inertia tensor is not symmetric"));
            }
            if link.inertia.cholesky().is_none() {
                return invalid(format!("link {i}: inertia tensor is not positive definite"));
            }
        }
        Ok(())
    }

    pub fn lower_limits(&self) -> DVector<T> {
        DVector::from_iterator(self.n(), self.links.iter().map(|l| l.lower))
    }

    pub fn upper_limits(&self) -> DVector<T> {
        DVector::from_iterator(self.n(), self.links.iter().map(|l| l.upper))
    }

    pub fn torque_limits(&self) -> DVector<T> {
        DVector::from_iterator(self.n(), self.links.iter().map(|l| l.torque_limit))
    }

    /// Rigidly attaches a payload to the last link. `com` and `inertia` (about
    /// the payload's own centre of mass) are given in the end-effector frame.
    pub fn attach_payload(&mut self, mass: T, com: Vector3<T>, inertia: Matrix3<T>) {
        if mass <= T::zero() {
            return;
        }
        let tool = self.tool;
        let last = self.links.last_mut().expect("validated model has links");
        let rot = tool.rotation.to_rotation_matrix();
        let com_link = tool.transform_point(&com.into()).coords;
        let inertia_link = rot.matrix() * inertia * rot.matrix().transpose();

        let total = last.mass + mass;
        let combined_com = (last.com * last.mass + com_link * mass) / total;
        let shift = |m: T, r: Vector3<T>| -> Matrix3<T> {
            (Matrix3::identity() * r.dot(&r) - r * r.transpose()) * m
        };
        last.inertia = last.inertia
            + shift(last.mass, last.com - combined_com)
            + inertia_link
            + shift(mass, com_link - combined_com);
        last.com = combined_com;
        last.mass = total;
    }

    /// Model with every quantity converted to another scalar type.
    pub fn cast<U: Real>(&self) -> ManipulatorModel<U> {
        let c = |x: T| U::lit(x.as_f64());
        ManipulatorModel {
            name: self.name.clone(),
            convention: self.convention,
            links: self
                .links
                .iter()
                .map(|l| Link {
                    a: c(l.a),
                    d: c(l.d),
                    alpha: c(l.alpha),
                    theta_offset: c(l.theta_offset),
                    mass: c(l.mass),
                    com: l.com.map(c),
                    inertia: l.inertia.map(c),
                    armature: c(l.armature),
                    lower: c(l.lower),
                    upper: c(l.upper),
                    torque_limit: c(l.torque_limit),
                    continuous: l.continuous,
                })
                .collect(),
            tool: Isometry3::from_parts(
                Translation3::from(self.tool.translation.vector.map(c)),
                UnitQuaternion::new_normalize(nalgebra::Quaternion::from(
                    self.tool.rotation.coords.map(c),
                )),
            ),
            gravity: self.gravity.map(c),
        }
    }
}

/// On-disk form of a [`ManipulatorModel`] (TOML).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub name: String,
    #[serde(default)]
    pub convention: DhConvention,
    #[serde(default = "default_gravity")]
    pub gravity: [f64; 3],
    #[serde(default)]
    pub tool_xyz: [f64; 3],
    /// Roll-pitch-yaw of the tool frame relative to the last link, rad.
    #[serde(default)]
    pub tool_rpy: [f64; 3],
    pub links: Vec<LinkFile>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkFile {
    pub a: f64,
    pub d: f64,
    pub alpha: f64,
    #[serde(default)]
    pub theta_offset: f64,
    pub mass: f64,
    pub com: [f64; 3],
    /// `[ixx, iyy, izz, ixy, ixz, iyz]` about the centre of mass.
    pub inertia: [f64; 6],
    #[serde(default)]
    pub armature: f64,
    pub limits: [f64; 2],
    pub torque_limit: f64,
    #[serde(default)]
    pub continuous: bool,
}

fn default_gravity() -> [f64; 3] {
    [0.0, 0.0, -9.81]
}

impl ModelFile {
    pub fn parse(text: &str) -> Result<Self, DynamicsError> {
        toml::from_str(text).map_err(|e| DynamicsError::InvalidModel(e.to_string()))
    }

    pub fn build<T: Real>(&self) -> Result<ManipulatorModel<T>, DynamicsError> {
        let c = T::lit;
        let links = self
            .links
            .iter()
            .map(|l| {
                let [xx, yy, zz, xy, xz, yz] = l.inertia;
                Link {
                    a: c(l.a),
                    d: c(l.d),
                    alpha: c(l.alpha),
                    theta_offset: c(l.theta_offset),
                    mass: c(l.mass),
                    com: Vector3::new(c(l.com[0]), c(l.com[1]), c(l.com[2])),
                    inertia: Matrix3::new(xx, xy, xz, xy, yy, yz, xz, yz, zz).map(c),
                    armature: c(l.armature),
                    lower: c(l.limits[0]),
                    upper: c(l.limits[1]),
                    torque_limit: c(l.torque_limit),
                    continuous: l.continuous,
                }
            })
            .collect();
        let [r, p, y] = self.tool_rpy;
        let tool = Isometry3::from_parts(
            Translation3::new(c(self.tool_xyz[0]), c(self.tool_xyz[1]), c(self.tool_xyz[2])),
            UnitQuaternion::from_euler_angles(c(r), c(p), c(y)),
        );
        let g = Vector3::new(c(self.gravity[0]), c(self.gravity[1]), c(self.gravity[2]));
        ManipulatorModel::new(self.name.clone(), self.convention, links, tool, g)
    }
}

const PANDA_NOMINAL: &str = include_str!("../../data/models/panda_nominal.toml");

/// The shipped 7-DoF Panda-like arm. Kinematics follow the published DH table;
/// inertial values are nominal, not identified.
pub fn panda_nominal<T: Real>() -> ManipulatorModel<T> {
    ModelFile::parse(PANDA_NOMINAL)
        .and_then(|f| f.build())
        .expect("shipped model file is valid")
}

/// Text of the shipped model file, for users who want a template.
pub fn panda_nominal_source() -> &'static str {
    PANDA_NOMINAL
}
