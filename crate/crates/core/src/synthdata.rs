//! Deterministic synthetic objects and scenes with exact ground truth.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{Rotation3, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gss::Box3;
use crate::pointset::{derive_seed, seeded_rng, Point, PointCloud, UNLABELED};

pub const MIN_SHAPE_POINTS: usize = 50;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid shape spec: {0}")]
    InvalidSpec(String),
    #[error("objects {0} and {1} overlap")]
    Overlap(usize, usize),
    #[error("scene needs at least one object")]
    EmptyScene,
}

pub type Result<T> = std::result::Result<T, SynthError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    Plane,
    Sphere,
    Box,
    Cylinder,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 4] = [ShapeKind::Plane, ShapeKind::Sphere, ShapeKind::Box, ShapeKind::Cylinder];

    pub fn class_id(self) -> u32 {
        self as u32
    }

    pub fn from_class_id(id: u32) -> Option<Self> {
        Self::ALL.get(id as usize).copied()
    }

    /// Size parameters of a typical object of this kind, in meters.
    pub fn canonical_size(self) -> [f64; 3] {
        match self {
            ShapeKind::Plane => [1.0, 1.0, 0.0],
            ShapeKind::Sphere => [0.5, 0.0, 0.0],
            ShapeKind::Box => [0.8, 0.6, 0.4],
            ShapeKind::Cylinder => [0.3, 1.0, 0.0],
        }
    }
}

impl fmt::Display for ShapeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ShapeKind::Plane => "plane",
            ShapeKind::Sphere => "sphere",
            ShapeKind::Box => "box",
            ShapeKind::Cylinder => "cylinder",
        };
        f.write_str(s)
    }
}

impl FromStr for ShapeKind {
    type Err = SynthError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.to_string() == s)
            .ok_or_else(|| SynthError::InvalidSpec(format!("unknown shape kind '{s}'")))
    }
}

/// Rigid placement: intrinsic roll/pitch/yaw (radians) then translation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose {
    pub rotation: [f64; 3],
    pub translation: Point,
}

impl Pose {
    pub fn at(translation: Point) -> Self {
        Self { rotation: [0.0; 3], translation }
    }

    fn apply(&self, p: Point) -> Point {
        let [roll, pitch, yaw] = self.rotation;
        let v = if roll == 0.0 && pitch == 0.0 && yaw == 0.0 {
            Vector3::from(p)
        } else {
            Rotation3::from_euler_angles(roll, pitch, yaw) * Vector3::from(p)
        };
        [v[0] + self.translation[0], v[1] + self.translation[1], v[2] + self.translation[2]]
    }
}

/// One object to generate.
///
/// `size` is interpreted per kind: plane `(width, depth, -)`, sphere
/// `(radius, -, -)`, box `(dx, dy, dz)`, cylinder `(radius, height, -)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeSpec {
    pub kind: ShapeKind,
    pub size: [f64; 3],
    pub noise: f64,
    pub points: usize,
    pub pose: Pose,
}

impl ShapeSpec {
    pub fn canonical(kind: ShapeKind, points: usize) -> Self {
        Self { kind, size: kind.canonical_size(), noise: 0.0, points, pose: Pose::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.points < MIN_SHAPE_POINTS {
            return Err(SynthError::InvalidSpec(format!(
                "{} points, need at least {MIN_SHAPE_POINTS}",
                self.points
            )));
        }
        let finite = self
            .size
            .iter()
            .chain(&self.pose.rotation)
            .chain(&self.pose.translation)
            .chain(std::iter::once(&self.noise))
            .all(|v| v.is_finite());
        if !finite || self.noise < 0.0 {
            return Err(SynthError::InvalidSpec("parameters must be finite, noise >= 0".into()));
        }
        let needed = match self.kind {
            ShapeKind::Plane => 2,
            ShapeKind::Sphere => 1,
            ShapeKind::Box => 3,
            ShapeKind::Cylinder => 2,
        };
        if self.size[..needed].iter().any(|&s| s <= 0.0) {
            return Err(SynthError::InvalidSpec(format!("{} needs {needed} positive size parameters", self.kind)));
        }
        Ok(())
    }
}

fn surface_point(kind: ShapeKind, size: [f64; 3], rng: &mut impl Rng) -> Point {
    let mut u = || rng.random::<f64>();
    match kind {
        ShapeKind::Plane => [(u() - 0.5) * size[0], (u() - 0.5) * size[1], 0.0],
        ShapeKind::Sphere => {
            let z = 2.0 * u() - 1.0;
            let phi = 2.0 * PI * u();
            let r = (1.0 - z * z).sqrt();
            [size[0] * r * phi.cos(), size[0] * r * phi.sin(), size[0] * z]
        }
        ShapeKind::Box => {
            let [dx, dy, dz] = size;
            let areas = [dy * dz, dy * dz, dx * dz, dx * dz, dx * dy, dx * dy];
            let total: f64 = areas.iter().sum();
            let mut pick = u() * total;
            let mut face = 5;
            for (i, a) in areas.iter().enumerate() {
                if pick < *a {
                    face = i;
                    break;
                }
                pick -= a;
            }
            let (a, b) = (u() - 0.5, u() - 0.5);
            let sign = if face % 2 == 0 { -0.5 } else { 0.5 };
            match face / 2 {
                0 => [sign * dx, a * dy, b * dz],
                1 => [a * dx, sign * dy, b * dz],
                _ => [a * dx, b * dy, sign * dz],
            }
        }
        ShapeKind::Cylinder => {
            let [r, h, _] = size;
            let side = 2.0 * PI * r * h;
            let cap = PI * r * r;
            let pick = u() * (side + 2.0 * cap);
            let theta = 2.0 * PI * u();
            if pick < side {
                [r * theta.cos(), r * theta.sin(), (u() - 0.5) * h]
            } else {
                let rho = r * u().sqrt();
                let z = if pick < side + cap { -0.5 * h } else { 0.5 * h };
                [rho * theta.cos(), rho * theta.sin(), z]
            }
        }
    }
}

/// Surface samples of one posed shape with Gaussian noise; every point is
/// labeled with the kind's class id.
pub fn gen_object(spec: &ShapeSpec, seed: u64) -> Result<(PointCloud, u32)> {
    spec.validate()?;
    let mut rng = seeded_rng(seed);
    let noise = (spec.noise > 0.0).then(|| Normal::new(0.0, spec.noise).expect("valid sigma"));
    let points: Vec<Point> = (0..spec.points)
        .map(|_| {
            let mut p = surface_point(spec.kind, spec.size, &mut rng);
            if let Some(n) = &noise {
                for c in &mut p {
                    *c += n.sample(&mut rng);
                }
            }
            spec.pose.apply(p)
        })
        .collect();
    let class = spec.kind.class_id();
    let cloud = PointCloud::new(format!("{}-{seed}", spec.kind), points)
        .and_then(|c| c.with_labels(vec![class; spec.points]))
        .map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
    Ok((cloud, class))
}

/// Ground-truth object in a scene.
#[derive(Debug, Clone, PartialEq)]
pub struct GtObject {
    pub bbox: Box3,
    pub class: u32,
    pub point_indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub cloud: PointCloud,
    pub objects: Vec<GtObject>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FloorSpec {
    pub points: usize,
    pub margin: f64,
    pub gap: f64,
    pub noise: f64,
}

impl Default for FloorSpec {
    fn default() -> Self {
        Self { points: 400, margin: 0.5, gap: 0.05, noise: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SceneOptions {
    pub floor: Option<FloorSpec>,
    pub require_disjoint: bool,
}

/// Union of posed objects plus an optional floor. Floor points carry the
/// [`UNLABELED`] id and belong to no ground-truth box.
pub fn gen_scene(specs: &[ShapeSpec], options: &SceneOptions, seed: u64) -> Result<Scene> {
    if specs.is_empty() {
        return Err(SynthError::EmptyScene);
    }
    let mut points = Vec::new();
    let mut labels = Vec::new();
    let mut objects = Vec::new();
    for (i, spec) in specs.iter().enumerate() {
        let (cloud, class) = gen_object(spec, derive_seed(seed, i as u64))?;
        let start = points.len();
        points.extend_from_slice(cloud.points());
        labels.extend(std::iter::repeat_n(class, cloud.len()));
        let bbox = Box3::from_points(cloud.points()).expect("non-empty object");
        objects.push(GtObject { bbox, class, point_indices: (start..points.len()).collect() });
    }
    if options.require_disjoint {
        for i in 0..objects.len() {
            for j in i + 1..objects.len() {
                if objects[i].bbox.intersection_volume(&objects[j].bbox) > 0.0 {
                    return Err(SynthError::Overlap(i, j));
                }
            }
        }
    }
    if let Some(floor) = &options.floor {
        let extent = Box3::from_points(&points).expect("non-empty scene");
        let z = extent.min[2] - floor.gap;
        let (x0, x1) = (extent.min[0] - floor.margin, extent.max[0] + floor.margin);
        let (y0, y1) = (extent.min[1] - floor.margin, extent.max[1] + floor.margin);
        let mut rng = seeded_rng(derive_seed(seed, u64::MAX));
        for _ in 0..floor.points {
            let mut p = [rng.random_range(x0..=x1), rng.random_range(y0..=y1), z];
            if floor.noise > 0.0 {
                let n: f64 = rng.sample(StandardNormal);
                p[2] += floor.noise * n;
            }
            points.push(p);
            labels.push(UNLABELED);
        }
    }
    let cloud = PointCloud::new(format!("scene-{seed}"), points)
        .and_then(|c| c.with_labels(labels))
        .map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
    Ok(Scene { cloud, objects })
}

/// Per-object orientation in a generated set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RotationMode {
    /// Canonical axes.
    None,
    /// Upright, uniformly random heading about +z.
    Yaw,
    /// Uniform over all rotations.
    Full,
}

/// Recipe for a labeled object collection with per-object variation.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectSetSpec {
    pub kinds: Vec<ShapeKind>,
    pub per_class: usize,
    pub points: usize,
    pub noise: f64,
    /// Each size parameter is scaled by a factor drawn from `[1 - v, 1 + v]`.
    pub size_variation: f64,
    pub rotation: RotationMode,
}

impl ObjectSetSpec {
    pub fn new(kinds: Vec<ShapeKind>, per_class: usize) -> Self {
        Self { kinds, per_class, points: 256, noise: 0.005, size_variation: 0.3, rotation: RotationMode::Yaw }
    }
}

/// Objects ordered class by class (`per_class` of each kind in turn).
pub fn gen_object_set(spec: &ObjectSetSpec, seed: u64) -> Result<Vec<(PointCloud, u32)>> {
    let mut out = Vec::with_capacity(spec.kinds.len() * spec.per_class);
    let mut rng = seeded_rng(seed);
    for &kind in &spec.kinds {
        for i in 0..spec.per_class {
            let mut size = kind.canonical_size();
            for s in &mut size {
                *s *= 1.0 + spec.size_variation * (2.0 * rng.random::<f64>() - 1.0);
            }
            let rotation = match spec.rotation {
                RotationMode::None => [0.0; 3],
                RotationMode::Yaw => [0.0, 0.0, rng.random_range(-PI..PI)],
                RotationMode::Full => random_euler(&mut rng),
            };
            let shape = ShapeSpec {
                kind,
                size,
                noise: spec.noise,
                points: spec.points,
                pose: Pose { rotation, translation: [0.0; 3] },
            };
            let (cloud, class) = gen_object(&shape, rng.random())?;
            out.push((cloud.with_id(format!("{kind}-{i:04}")), class));
        }
    }
    Ok(out)
}

/// Euler angles of a rotation drawn uniformly from SO(3).
fn random_euler(rng: &mut impl Rng) -> [f64; 3] {
    let q: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
    let q = nalgebra::UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]));
    let (r, p, y) = q.euler_angles();
    [r, p, y]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pointset::{estimate_normals, prepare_object};

    #[test]
    fn noiseless_sphere_is_exact() {
        let mut spec = ShapeSpec::canonical(ShapeKind::Sphere, 500);
        spec.size = [1.0, 0.0, 0.0];
        spec.pose = Pose::at([1.0, 2.0, 3.0]);
        let (cloud, class) = gen_object(&spec, 3).unwrap();
        assert_eq!(class, 1);
        for p in cloud.points() {
            let d = ((p[0] - 1.0).powi(2) + (p[1] - 2.0).powi(2) + (p[2] - 3.0).powi(2)).sqrt();
            assert!((d - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = ShapeSpec::canonical(ShapeKind::Cylinder, 300);
        assert_eq!(gen_object(&spec, 8).unwrap(), gen_object(&spec, 8).unwrap());
        assert_ne!(gen_object(&spec, 8).unwrap(), gen_object(&spec, 9).unwrap());
        let set = ObjectSetSpec::new(ShapeKind::ALL.to_vec(), 3);
        assert_eq!(gen_object_set(&set, 1).unwrap(), gen_object_set(&set, 1).unwrap());
    }

    #[test]
    fn plane_normals_recovered() {
        let spec = ShapeSpec {
            kind: ShapeKind::Plane,
            size: [2.0, 2.0, 0.0],
            noise: 0.002,
            points: 800,
            pose: Pose { rotation: [0.3, -0.2, 0.5], translation: [0.0; 3] },
        };
        let (cloud, _) = gen_object(&spec, 4).unwrap();
        let truth = Rotation3::from_euler_angles(0.3, -0.2, 0.5) * Vector3::z();
        let with = estimate_normals(&cloud, 12).unwrap();
        let angles: Vec<f64> = with
            .normals()
            .unwrap()
            .iter()
            .map(|n| (n[0] * truth[0] + n[1] * truth[1] + n[2] * truth[2]).abs().min(1.0).acos().to_degrees())
            .collect();
        let mean = angles.iter().sum::<f64>() / angles.len() as f64;
        let worst = angles.iter().cloned().fold(0.0, f64::max);
        assert!(mean < 2.0 && worst < 10.0);
    }

    #[test]
    fn invalid_specs() {
        let mut spec = ShapeSpec::canonical(ShapeKind::Box, 49);
        assert!(gen_object(&spec, 0).is_err());
        spec.points = 60;
        spec.size[2] = 0.0;
        assert!(gen_object(&spec, 0).is_err());
        spec.size[2] = 1.0;
        spec.noise = f64::NAN;
        assert!(gen_object(&spec, 0).is_err());
    }

    fn placed(kind: ShapeKind, x: f64) -> ShapeSpec {
        let mut s = ShapeSpec::canonical(kind, 200);
        s.pose = Pose::at([x, 0.0, 1.0]);
        s
    }

    #[test]
    fn scene_with_floor() {
        let opts = SceneOptions { floor: Some(FloorSpec::default()), require_disjoint: true };
        let scene = gen_scene(&[placed(ShapeKind::Box, 0.0)], &opts, 5).unwrap();
        assert_eq!(scene.objects.len(), 1);
        assert_eq!(scene.cloud.len(), 600);
        assert_eq!(scene.objects[0].point_indices, (0..200).collect::<Vec<_>>());
        let labels = scene.cloud.gt_labels().unwrap();
        assert!(labels[200..].iter().all(|&l| l == UNLABELED));
    }

    #[test]
    fn disjoint_scene_boxes_and_membership() {
        let specs = [placed(ShapeKind::Box, 0.0), placed(ShapeKind::Sphere, 3.0), placed(ShapeKind::Cylinder, 6.0)];
        let opts = SceneOptions { floor: Some(FloorSpec::default()), require_disjoint: true };
        let scene = gen_scene(&specs, &opts, 6).unwrap();
        for i in 0..3 {
            for j in i + 1..3 {
                assert_eq!(crate::gss::iou3d(&scene.objects[i].bbox, &scene.objects[j].bbox), 0.0);
            }
        }
        // Every labeled point lies in exactly its own object's box; floor
        // points lie in none.
        let labels = scene.cloud.gt_labels().unwrap();
        for (idx, p) in scene.cloud.points().iter().enumerate() {
            let inside: Vec<usize> = (0..3).filter(|&o| scene.objects[o].bbox.contains(p)).collect();
            match labels[idx] {
                UNLABELED => assert!(inside.is_empty()),
                class => {
                    assert_eq!(inside.len(), 1);
                    assert_eq!(scene.objects[inside[0]].class, class);
                    assert!(scene.objects[inside[0]].point_indices.contains(&idx));
                }
            }
        }
    }

    #[test]
    fn overlap_is_reported() {
        let specs = [placed(ShapeKind::Box, 0.0), placed(ShapeKind::Sphere, 0.2)];
        let opts = SceneOptions { floor: None, require_disjoint: true };
        assert_eq!(gen_scene(&specs, &opts, 1), Err(SynthError::Overlap(0, 1)));
        assert_eq!(gen_scene(&[], &opts, 1), Err(SynthError::EmptyScene));
    }

    fn chamfer(a: &[Point], b: &[Point]) -> f64 {
        let one_way = |a: &[Point], b: &[Point]| {
            a.iter()
                .map(|p| b.iter().map(|q| crate::pointset::dist2(p, q)).fold(f64::INFINITY, f64::min))
                .sum::<f64>()
                / a.len() as f64
        };
        one_way(a, b) + one_way(b, a)
    }

    #[test]
    fn kinds_are_separable_by_chamfer() {
        // Canonical shapes at 512 samples: the closest pair (plane vs box)
        // measures about 0.14.
        const FLOOR: f64 = 0.05;
        let samples: Vec<Vec<Point>> = ShapeKind::ALL
            .iter()
            .map(|&k| {
                let (c, _) = gen_object(&ShapeSpec::canonical(k, 2048), 1).unwrap();
                prepare_object(&c, 512, 0).unwrap().points
            })
            .collect();
        for i in 0..4 {
            for j in i + 1..4 {
                let d = chamfer(&samples[i], &samples[j]);
                assert!(d > FLOOR, "{:?} vs {:?}: {d}", ShapeKind::ALL[i], ShapeKind::ALL[j]);
            }
        }
    }
}
