//! Point-cloud data model, sampling, normalization, jitter and normal
//! estimation.

mod io;
pub mod knn;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

pub use io::{load_cloud, save_cloud, CloudFormat};
pub use knn::KdTree;

/// A 3D coordinate in meters.
pub type Point = [f64; 3];

/// Class id reserved for "no label".
pub const UNLABELED: u32 = u32::MAX;

/// Default number of points per object sample.
pub const DEFAULT_SAMPLE_SIZE: usize = 1024;

const UNIT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum PointSetError {
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("degenerate cloud: all points coincide")]
    DegenerateCloud,
    #[error("need at least {needed} points, cloud has {found}")]
    TooFewPoints { needed: usize, found: usize },
    #[error("non-finite coordinate at point {0}")]
    NonFinite(usize),
    #[error("normal {index} is not unit length (norm {norm})")]
    NonUnitNormal { index: usize, norm: f64 },
    #[error("{what} has length {found}, expected {expected}")]
    LengthMismatch { what: &'static str, expected: usize, found: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, PointSetError>;

/// Raw 3D points with optional unit normals and optional per-point class ids.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    id: String,
    points: Vec<Point>,
    normals: Option<Vec<Point>>,
    gt_labels: Option<Vec<u32>>,
}

impl PointCloud {
    pub fn new(id: impl Into<String>, points: Vec<Point>) -> Result<Self> {
        if let Some(bad) = points.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(PointSetError::NonFinite(bad));
        }
        Ok(Self { id: id.into(), points, normals: None, gt_labels: None })
    }

    pub fn with_normals(mut self, normals: Vec<Point>) -> Result<Self> {
        if normals.len() != self.points.len() {
            return Err(PointSetError::LengthMismatch {
                what: "normals",
                expected: self.points.len(),
                found: normals.len(),
            });
        }
        for (index, n) in normals.iter().enumerate() {
            let norm = norm(n);
            if !norm.is_finite() || (norm - 1.0).abs() > UNIT_TOLERANCE {
                return Err(PointSetError::NonUnitNormal { index, norm });
            }
        }
        self.normals = Some(normals);
        Ok(self)
    }

    pub fn with_labels(mut self, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != self.points.len() {
            return Err(PointSetError::LengthMismatch {
                what: "gt_labels",
                expected: self.points.len(),
                found: labels.len(),
            });
        }
        self.gt_labels = Some(labels);
        Ok(self)
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn normals(&self) -> Option<&[Point]> {
        self.normals.as_deref()
    }

    pub fn gt_labels(&self) -> Option<&[u32]> {
        self.gt_labels.as_deref()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// New cloud made of the given point indices (in that order), carrying
    /// normals and labels along.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            id: self.id.clone(),
            points: indices.iter().map(|&i| self.points[i]).collect(),
            normals: self.normals.as_ref().map(|n| indices.iter().map(|&i| n[i]).collect()),
            gt_labels: self.gt_labels.as_ref().map(|l| indices.iter().map(|&i| l[i]).collect()),
        }
    }

    pub fn centroid(&self) -> Option<Point> {
        centroid(&self.points)
    }

    /// Most frequent gt label, ignoring [`UNLABELED`]; ties go to the lower id.
    pub fn majority_label(&self) -> Option<u32> {
        let labels = self.gt_labels.as_ref()?;
        let mut counts = std::collections::BTreeMap::new();
        for &l in labels.iter().filter(|&&l| l != UNLABELED) {
            *counts.entry(l).or_insert(0usize) += 1;
        }
        counts
            .into_iter()
            .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
            .map(|(l, _)| l)
    }
}

/// A fixed-size object cloud centered at the origin and scaled into the unit
/// ball.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectSample {
    pub points: Vec<Point>,
    pub source_id: String,
    pub source_box: Option<usize>,
}

impl ObjectSample {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

pub(crate) fn norm(p: &Point) -> f64 {
    (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
}

pub(crate) fn dist2(a: &Point, b: &Point) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
}

pub(crate) fn centroid(points: &[Point]) -> Option<Point> {
    if points.is_empty() {
        return None;
    }
    let mut c = [0.0; 3];
    for p in points {
        for a in 0..3 {
            c[a] += p[a];
        }
    }
    let n = points.len() as f64;
    Some([c[0] / n, c[1] / n, c[2] / n])
}

pub(crate) fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent child seed for stream `stream` of `seed` (splitmix64 mix).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Reduce or pad a cloud to exactly `count` points.
///
/// With enough points this is farthest-point sampling seeded at the point
/// nearest the centroid; the chosen indices are returned in ascending order.
/// Smaller clouds keep every point once and are topped up with seeded
/// uniform draws. A cloud that already has `count` points is returned as is.
pub fn sample_points(cloud: &PointCloud, count: usize, seed: u64) -> Result<PointCloud> {
    if cloud.is_empty() {
        return Err(PointSetError::EmptyCloud);
    }
    if count == 0 {
        return Err(PointSetError::InvalidArgument("sample count must be positive".into()));
    }
    let n = cloud.len();
    if n == count {
        return Ok(cloud.clone());
    }
    let indices = if n > count {
        farthest_point_indices(cloud.points(), count)
    } else {
        let mut rng = seeded_rng(seed);
        let mut idx: Vec<usize> = (0..n).collect();
        idx.extend((n..count).map(|_| rng.random_range(0..n)));
        idx
    };
    Ok(cloud.select(&indices))
}

fn farthest_point_indices(points: &[Point], count: usize) -> Vec<usize> {
    let c = centroid(points).expect("non-empty");
    let start = points
        .iter()
        .enumerate()
        .min_by(|a, b| dist2(a.1, &c).total_cmp(&dist2(b.1, &c)).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
        .expect("non-empty");
    let mut nearest = vec![f64::INFINITY; points.len()];
    let mut chosen = Vec::with_capacity(count);
    let mut current = start;
    for _ in 0..count {
        chosen.push(current);
        nearest[current] = f64::NEG_INFINITY;
        let mut best = (f64::NEG_INFINITY, usize::MAX);
        for (i, p) in points.iter().enumerate() {
            if nearest[i] == f64::NEG_INFINITY {
                continue;
            }
            let d = dist2(p, &points[current]);
            if d < nearest[i] {
                nearest[i] = d;
            }
            // Strict `>` keeps the lowest index among equally far points.
            if nearest[i] > best.0 {
                best = (nearest[i], i);
            }
        }
        current = best.1;
    }
    chosen.sort_unstable();
    chosen
}

/// Translate by the centroid, then divide by the largest point norm.
pub fn normalize_object(cloud: &PointCloud) -> Result<ObjectSample> {
    let c = cloud.centroid().ok_or(PointSetError::EmptyCloud)?;
    let centered: Vec<Point> = cloud
        .points()
        .iter()
        .map(|p| [p[0] - c[0], p[1] - c[1], p[2] - c[2]])
        .collect();
    let max_norm = centered.iter().map(norm).fold(0.0, f64::max);
    let magnitude = cloud
        .points()
        .iter()
        .flat_map(|p| p.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    if max_norm <= 1e-12 * (1.0 + magnitude) {
        return Err(PointSetError::DegenerateCloud);
    }
    let points = centered
        .into_iter()
        .map(|p| [p[0] / max_norm, p[1] / max_norm, p[2] / max_norm])
        .collect();
    Ok(ObjectSample { points, source_id: cloud.id().to_string(), source_box: None })
}

/// Sample to `count` points and normalize.
pub fn prepare_object(cloud: &PointCloud, count: usize, seed: u64) -> Result<ObjectSample> {
    normalize_object(&sample_points(cloud, count, seed)?)
}

/// Add independent zero-mean Gaussian noise with standard deviation `sigma`
/// to every coordinate.
pub fn apply_jitter(cloud: &PointCloud, sigma: f64, seed: u64) -> Result<PointCloud> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(PointSetError::InvalidArgument(format!("jitter sigma {sigma} must be >= 0")));
    }
    if sigma == 0.0 {
        return Ok(cloud.clone());
    }
    let noise = Normal::new(0.0, sigma).expect("valid sigma");
    let mut rng = seeded_rng(seed);
    let mut out = cloud.clone();
    for p in &mut out.points {
        for c in p.iter_mut() {
            *c += noise.sample(&mut rng);
        }
    }
    Ok(out)
}

/// Unit normal of the least-squares plane through `points`, with the
/// deterministic sign convention used throughout the crate.
pub(crate) fn plane_normal(points: impl Iterator<Item = Point> + Clone) -> Option<Point> {
    let mut n = 0usize;
    let mut sum = Vector3::zeros();
    for p in points.clone() {
        sum += Vector3::from(p);
        n += 1;
    }
    if n < 3 {
        return None;
    }
    let mean = sum / n as f64;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = Vector3::from(p) - mean;
        cov += d * d.transpose();
    }
    Some(smallest_eigenvector(&cov))
}

pub(crate) fn smallest_eigenvector(cov: &Matrix3<f64>) -> Point {
    let eig = SymmetricEigen::new(*cov);
    let (col, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0)))
        .expect("3 eigenvalues");
    let v = eig.eigenvectors.column(col).normalize();
    orient([v[0], v[1], v[2]])
}

/// Flip so that z > 0, or y > 0 when z = 0, or x > 0 when y = z = 0.
pub(crate) fn orient(v: Point) -> Point {
    let flip = if v[2] != 0.0 {
        v[2] < 0.0
    } else if v[1] != 0.0 {
        v[1] < 0.0
    } else {
        v[0] < 0.0
    };
    // Adding 0.0 turns any -0.0 into +0.0.
    if flip {
        [-v[0] + 0.0, -v[1] + 0.0, -v[2] + 0.0]
    } else {
        [v[0] + 0.0, v[1] + 0.0, v[2] + 0.0]
    }
}

/// PCA normals over each point and its `k` nearest neighbors.
pub fn estimate_normals(cloud: &PointCloud, k: usize) -> Result<PointCloud> {
    if k == 0 {
        return Err(PointSetError::InvalidArgument("k must be positive".into()));
    }
    if cloud.len() < k + 1 {
        return Err(PointSetError::TooFewPoints { needed: k + 1, found: cloud.len() });
    }
    let points = cloud.points();
    let tree = KdTree::new(points);
    let normals: Vec<Point> = (0..points.len())
        .map(|i| {
            let nbrs = tree.nearest(&points[i], k, Some(i));
            let hood = std::iter::once(i).chain(nbrs).map(|j| points[j]);
            let hood: Vec<Point> = hood.collect();
            plane_normal(hood.iter().copied()).unwrap_or([0.0, 0.0, 1.0])
        })
        .collect();
    let mut out = cloud.clone();
    out.normals = Some(normals);
    Ok(out)
}
