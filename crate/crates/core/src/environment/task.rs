use std::fmt;
use std::str::FromStr;

use nalgebra::{UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::EnvError;
use crate::kinodynamics::Pose;

/// Shipped task presets plus user-defined tasks.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum TaskId {
    A,
    B,
    C,
    D,
    E,
    F,
    Training,
    Custom(String),
}

impl TaskId {
    pub const TABLE: [TaskId; 6] = [TaskId::A, TaskId::B, TaskId::C, TaskId::D, TaskId::E, TaskId::F];

    pub fn as_str(&self) -> &str {
        match self {
            TaskId::A => "A",
            TaskId::B => "B",
            TaskId::C => "C",
            TaskId::D => "D",
            TaskId::E => "E",
            TaskId::F => "F",
            TaskId::Training => "training",
            TaskId::Custom(s) => s,
        }
    }

    /// Position in the A..F column order, `None` for other tasks.
    pub fn column(&self) -> Option<usize> {
        Self::TABLE.iter().position(|t| t == self)
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskId {
    type Err = EnvError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "A" | "a" => TaskId::A,
            "B" | "b" => TaskId::B,
            "C" | "c" => TaskId::C,
            "D" | "d" => TaskId::D,
            "E" | "e" => TaskId::E,
            "F" | "f" => TaskId::F,
            "training" | "Training" => TaskId::Training,
            "" => return Err(EnvError::InvalidTask("empty task id".into())),
            other => TaskId::Custom(other.to_string()),
        })
    }
}

impl From<TaskId> for String {
    fn from(t: TaskId) -> String {
        t.as_str().to_string()
    }
}

impl TryFrom<String> for TaskId {
    type Error = EnvError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// Peg geometry in mm. `length`/`height` run along the insertion axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum PegShape {
    Cylinder { length: f64, diameter: f64 },
    Cuboid { length: f64, width: f64, height: f64 },
    HexPrism { length: f64, side: f64 },
}

impl PegShape {
    pub fn axial_length(&self) -> f64 {
        match *self {
            PegShape::Cylinder { length, .. } => length,
            PegShape::Cuboid { height, .. } => height,
            PegShape::HexPrism { length, .. } => length,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PegShape::Cylinder { .. } => "cylinder",
            PegShape::Cuboid { .. } => "cuboid",
            PegShape::HexPrism { .. } => "hex_prism",
        }
    }

    fn dims(&self) -> Vec<f64> {
        match *self {
            PegShape::Cylinder { length, diameter } => vec![length, diameter],
            PegShape::Cuboid { length, width, height } => vec![length, width, height],
            PegShape::HexPrism { length, side } => vec![length, side],
        }
    }

    /// Cross-section in metres at the given scale.
    fn section(&self, scale: f64) -> Section {
        let mm = 1e-3 * scale;
        match *self {
            PegShape::Cylinder { diameter, .. } => Section::Circle {
                radius: 0.5 * diameter * mm,
            },
            PegShape::Cuboid { length, width, .. } => {
                let (hx, hy) = (0.5 * length * mm, 0.5 * width * mm);
                Section::polygon(
                    vec![Vector2::x(), Vector2::y(), -Vector2::x(), -Vector2::y()],
                    vec![hx, hy, hx, hy],
                )
            }
            PegShape::HexPrism { side, .. } => {
                let apothem = side * mm * 3f64.sqrt() / 2.0;
                let normals = (0..6)
                    .map(|k| {
                        let a = std::f64::consts::FRAC_PI_3 * k as f64 + std::f64::consts::FRAC_PI_6;
                        Vector2::new(a.cos(), a.sin())
                    })
                    .collect();
                Section::polygon(normals, vec![apothem; 6])
            }
        }
    }
}

/// Informational manufacturing metadata.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Materials {
    pub peg: String,
    pub peg_process: String,
    pub hole: String,
    pub hole_process: String,
}

fn default_depth() -> f64 {
    15.0
}

fn default_chamfer() -> f64 {
    1.0
}

fn default_scale() -> f64 {
    1.0
}

fn default_hole_position() -> [f64; 3] {
    [0.5, 0.0, 0.0]
}

fn default_hole_rpy() -> [f64; 3] {
    [std::f64::consts::PI, 0.0, 0.0]
}

/// One peg-in-hole task. Lengths in mm at true scale; the hole placement
/// in metres, world frame, unaffected by `geometry_scale`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub id: TaskId,
    pub peg: PegShape,
    /// Gap between peg and hole wall on each side, mm.
    pub clearance: f64,
    #[serde(default = "default_depth")]
    pub hole_depth: f64,
    /// 45° lead-in chamfer width at the hole mouth, mm.
    #[serde(default = "default_chamfer")]
    pub chamfer: f64,
    #[serde(default = "default_scale")]
    pub geometry_scale: f64,
    /// Centre of the hole mouth, m.
    #[serde(default = "default_hole_position")]
    pub hole_position: [f64; 3],
    /// Roll-pitch-yaw of the hole frame; its z-axis points into the hole.
    #[serde(default = "default_hole_rpy")]
    pub hole_rpy: [f64; 3],
    #[serde(default)]
    pub materials: Materials,
}

const PRESETS: [(&str, &str); 7] = [
    ("A", include_str!("../../data/tasks/a.toml")),
    ("B", include_str!("../../data/tasks/b.toml")),
    ("C", include_str!("../../data/tasks/c.toml")),
    ("D", include_str!("../../data/tasks/d.toml")),
    ("E", include_str!("../../data/tasks/e.toml")),
    ("F", include_str!("../../data/tasks/f.toml")),
    ("training", include_str!("../../data/tasks/training.toml")),
];

impl TaskConfig {
    pub fn parse(text: &str) -> Result<Self, EnvError> {
        let cfg: TaskConfig = toml::from_str(text).map_err(|e| EnvError::InvalidTask(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Shipped preset for a task id.
    pub fn preset(id: &TaskId) -> Result<Self, EnvError> {
        PRESETS
            .iter()
            .find(|(name, _)| *name == id.as_str())
            .map(|(_, text)| Self::parse(text))
            .unwrap_or_else(|| Err(EnvError::InvalidTask(format!("no preset for task {id}"))))
    }

    /// Raw text of a shipped preset.
    pub fn preset_source(id: &TaskId) -> Option<&'static str> {
        PRESETS.iter().find(|(name, _)| *name == id.as_str()).map(|(_, t)| *t)
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.geometry_scale = scale;
        self
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |m: &str| Err(EnvError::InvalidTask(format!("task {}: {m}", self.id)));
        if !(self.clearance > 0.0) || !self.clearance.is_finite() {
            return bad("clearance must be positive");
        }
        if self.peg.dims().iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
            return bad("peg dimensions must be positive");
        }
        if !(self.hole_depth > 0.0) || self.hole_depth >= self.peg.axial_length() {
            return bad("hole depth must be positive and shorter than the peg");
        }
        if !(self.chamfer >= 0.0) || !self.chamfer.is_finite() {
            return bad("chamfer must be non-negative");
        }
        if !(self.geometry_scale > 0.0) || !self.geometry_scale.is_finite() {
            return bad("geometry_scale must be positive");
        }
        if self.hole_position.iter().chain(&self.hole_rpy).any(|x| !x.is_finite()) {
            return bad("hole placement must be finite");
        }
        Ok(())
    }

    pub fn hole_pose(&self) -> Pose<f64> {
        let [r, p, y] = self.hole_rpy;
        Pose::new(
            Vector3::from(self.hole_position),
            UnitQuaternion::from_euler_angles(r, p, y),
        )
    }

    /// Geometry in metres with the scale applied.
    pub fn geometry(&self) -> TaskGeometry {
        let s = self.geometry_scale;
        let mm = 1e-3 * s;
        let peg = self.peg.section(s);
        let hole = peg.offset(self.clearance * mm);
        TaskGeometry {
            peg_length: self.peg.axial_length() * mm,
            clearance: self.clearance * mm,
            depth: self.hole_depth * mm,
            chamfer: self.chamfer * mm,
            hole_pose: self.hole_pose(),
            peg,
            hole,
        }
    }
}

/// Convex cross-section, either a circle or a polygon given by outward face
/// normals and their distances from the centre.
#[derive(Clone, Debug, PartialEq)]
pub enum Section {
    Circle { radius: f64 },
    Polygon { normals: Vec<Vector2<f64>>, apothems: Vec<f64> },
}

impl Section {
    fn polygon(normals: Vec<Vector2<f64>>, apothems: Vec<f64>) -> Self {
        Section::Polygon { normals, apothems }
    }

    /// Same shape grown outward by `d` on every face.
    pub fn offset(&self, d: f64) -> Section {
        match self {
            Section::Circle { radius } => Section::Circle { radius: radius + d },
            Section::Polygon { normals, apothems } => Section::Polygon {
                normals: normals.clone(),
                apothems: apothems.iter().map(|a| a + d).collect(),
            },
        }
    }

    /// Outward distance from the boundary (negative inside) and the normal
    /// of the governing face. Exact for circles and for polygon points whose
    /// nearest feature is a face.
    pub fn distance(&self, p: &Vector2<f64>) -> (f64, Vector2<f64>) {
        match self {
            Section::Circle { radius } => {
                let r = p.norm();
                let n = if r > 1e-15 { p / r } else { Vector2::x() };
                (r - radius, n)
            }
            Section::Polygon { normals, apothems } => {
                let mut best = (f64::NEG_INFINITY, Vector2::x());
                for (n, a) in normals.iter().zip(apothems) {
                    let d = n.dot(p) - a;
                    if d > best.0 {
                        best = (d, *n);
                    }
                }
                best
            }
        }
    }

    pub fn vertices(&self) -> Vec<Vector2<f64>> {
        match self {
            Section::Circle { .. } => Vec::new(),
            Section::Polygon { normals, apothems } => {
                let m = normals.len();
                (0..m)
                    .map(|i| {
                        let j = (i + 1) % m;
                        let (n1, n2) = (normals[i], normals[j]);
                        let det = n1.x * n2.y - n1.y * n2.x;
                        Vector2::new(
                            (apothems[i] * n2.y - apothems[j] * n1.y) / det,
                            (n1.x * apothems[j] - n2.x * apothems[i]) / det,
                        )
                    })
                    .collect()
            }
        }
    }

    /// Largest distance from the centre to the boundary.
    pub fn circumradius(&self) -> f64 {
        match self {
            Section::Circle { radius } => *radius,
            Section::Polygon { .. } => self.vertices().iter().map(|v| v.norm()).fold(0.0, f64::max),
        }
    }

    /// `n` points on the boundary, evenly spaced by arc length; polygon
    /// corners are always included.
    pub fn boundary_points(&self, n: usize) -> Vec<Vector2<f64>> {
        match self {
            Section::Circle { radius } => (0..n)
                .map(|k| {
                    let a = std::f64::consts::TAU * k as f64 / n as f64;
                    Vector2::new(a.cos(), a.sin()) * *radius
                })
                .collect(),
            Section::Polygon { .. } => {
                let v = self.vertices();
                let m = v.len();
                let edges: Vec<f64> = (0..m).map(|i| (v[(i + 1) % m] - v[i]).norm()).collect();
                let perimeter: f64 = edges.iter().sum();
                let extra = n.saturating_sub(m);
                let mut out = Vec::with_capacity(m + extra);
                for i in 0..m {
                    let a = v[i];
                    let b = v[(i + 1) % m];
                    let k = (extra as f64 * edges[i] / perimeter).round() as usize;
                    for s in 0..=k {
                        out.push(a + (b - a) * (s as f64 / (k + 1) as f64));
                    }
                }
                out
            }
        }
    }
}

/// Task geometry in metres, ready for contact evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskGeometry {
    pub peg: Section,
    pub hole: Section,
    pub peg_length: f64,
    pub clearance: f64,
    pub depth: f64,
    pub chamfer: f64,
    /// Mouth centre; z-axis into the hole.
    pub hole_pose: Pose<f64>,
}

impl TaskGeometry {
    /// Radius of the hole mouth including the chamfer.
    pub fn mouth_radius(&self) -> f64 {
        self.hole.circumradius() + self.chamfer
    }
}
