//! Geometric selective search: planar region growing, hierarchical grouping
//! by size and volume similarity, and 3D non-maximum suppression.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pointset::{
    apply_jitter, estimate_normals, smallest_eigenvector, KdTree, Point, PointCloud, PointSetError,
};

#[derive(Debug, Error)]
pub enum GssError {
    #[error("cloud has no normals")]
    MissingNormals,
    #[error("scene bounding box has zero volume")]
    ZeroSceneVolume,
    #[error("no regions to group")]
    NoRegions,
    #[error("scene is empty")]
    EmptyScene,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    PointSet(#[from] PointSetError),
}

pub type Result<T> = std::result::Result<T, GssError>;

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box3 {
    pub min: Point,
    pub max: Point,
}

impl Box3 {
    pub fn new(min: Point, max: Point) -> Option<Self> {
        let ok = (0..3).all(|a| min[a].is_finite() && max[a].is_finite() && min[a] <= max[a]);
        ok.then_some(Self { min, max })
    }

    /// Tight extent of the given points.
    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Point>) -> Option<Self> {
        let mut it = points.into_iter();
        let first = *it.next()?;
        let mut b = Self { min: first, max: first };
        for p in it {
            b.include(p);
        }
        Some(b)
    }

    pub fn from_indices(points: &[Point], indices: &[usize]) -> Option<Self> {
        Self::from_points(indices.iter().map(|&i| &points[i]))
    }

    fn include(&mut self, p: &Point) {
        for a in 0..3 {
            self.min[a] = self.min[a].min(p[a]);
            self.max[a] = self.max[a].max(p[a]);
        }
    }

    pub fn union(&self, other: &Box3) -> Box3 {
        let mut b = *self;
        b.include(&other.min);
        b.include(&other.max);
        b
    }

    pub fn volume(&self) -> f64 {
        (0..3).map(|a| self.max[a] - self.min[a]).product()
    }

    pub fn diagonal(&self) -> f64 {
        (0..3).map(|a| (self.max[a] - self.min[a]).powi(2)).sum::<f64>().sqrt()
    }

    pub fn intersection_volume(&self, other: &Box3) -> f64 {
        (0..3)
            .map(|a| (self.max[a].min(other.max[a]) - self.min[a].max(other.min[a])).max(0.0))
            .product()
    }

    /// Closed containment test.
    pub fn contains(&self, p: &Point) -> bool {
        (0..3).all(|a| self.min[a] <= p[a] && p[a] <= self.max[a])
    }
}

/// Intersection over union; 0 for disjoint boxes or a zero union.
pub fn iou3d(a: &Box3, b: &Box3) -> f64 {
    let inter = a.intersection_volume(b);
    let union = a.volume() + b.volume() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// A planar patch found by region growing. The plane is `normal · x = offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub point_indices: Vec<usize>,
    pub plane_normal: Point,
    pub plane_offset: f64,
}

/// Candidate object: a box plus the scene points it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub bbox: Box3,
    pub point_indices: Vec<usize>,
    pub score: f64,
    pub scene_id: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GssParams {
    pub k: usize,
    pub max_angle_deg: f64,
    pub min_region_size: usize,
    /// `None` means 1% of the scene bounding-box diagonal.
    pub max_plane_dist: Option<f64>,
    pub jitter_sigma: f64,
    pub max_proposals: usize,
    pub nms_iou: f64,
    pub max_proposal_points: usize,
}

impl Default for GssParams {
    fn default() -> Self {
        Self {
            k: 12,
            max_angle_deg: 20.0,
            min_region_size: 50,
            max_plane_dist: None,
            jitter_sigma: 0.005,
            max_proposals: 1000,
            nms_iou: 0.75,
            max_proposal_points: 15_000,
        }
    }
}

impl GssParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(GssError::InvalidParameter(m.to_string()));
        if self.k < 3 {
            return bad("k must be at least 3");
        }
        if !(self.max_angle_deg > 0.0 && self.max_angle_deg <= 90.0) {
            return bad("max_angle_deg must be in (0, 90]");
        }
        if matches!(self.max_plane_dist, Some(d) if !(d > 0.0 && d.is_finite())) {
            return bad("max_plane_dist must be positive");
        }
        if !(self.jitter_sigma >= 0.0 && self.jitter_sigma.is_finite()) {
            return bad("jitter_sigma must be >= 0");
        }
        if self.max_proposals == 0 {
            return bad("max_proposals must be positive");
        }
        if !(self.nms_iou > 0.0 && self.nms_iou <= 1.0) {
            return bad("nms_iou must be in (0, 1]");
        }
        Ok(())
    }
}

/// Running least-squares plane over a growing point set.
struct PlaneFit {
    origin: Vector3<f64>,
    count: usize,
    sum: Vector3<f64>,
    outer: Matrix3<f64>,
    normal: Vector3<f64>,
    offset: f64,
}

impl PlaneFit {
    fn new(seed: &Point, normal: &Point) -> Self {
        let origin = Vector3::from(*seed);
        let normal = Vector3::from(*normal);
        Self { origin, count: 1, sum: Vector3::zeros(), outer: Matrix3::zeros(), normal, offset: normal.dot(&origin) }
    }

    fn add(&mut self, p: &Point) {
        // Accumulate relative to the seed to keep the covariance well conditioned.
        let d = Vector3::from(*p) - self.origin;
        self.count += 1;
        self.sum += d;
        self.outer += d * d.transpose();
        if self.count >= 3 {
            let n = self.count as f64;
            let mean = self.sum / n;
            let cov = self.outer / n - mean * mean.transpose();
            let fitted = Vector3::from(smallest_eigenvector(&cov));
            self.normal = if fitted.dot(&self.normal) < 0.0 { -fitted } else { fitted };
            self.offset = self.normal.dot(&(mean + self.origin));
        }
    }

    fn distance(&self, p: &Point) -> f64 {
        (self.normal.dot(&Vector3::from(*p)) - self.offset).abs()
    }
}

/// Greedy planar region growing over the k-NN graph.
///
/// Seeds are taken in index order. A neighbor joins when its normal is
/// within `max_angle_deg` of the region's current plane normal (sign
/// ignored) and it lies within `max_plane_dist` of that plane; the plane is
/// refit after each addition. Regions smaller than `min_region_size` are
/// dropped and their points become available to later regions, but never
/// seed again.
pub fn detect_regions(
    cloud: &PointCloud,
    k: usize,
    max_angle_deg: f64,
    min_region_size: usize,
    max_plane_dist: f64,
) -> Result<Vec<Region>> {
    let normals = cloud.normals().ok_or(GssError::MissingNormals)?;
    if k < 3 {
        return Err(GssError::InvalidParameter("k must be at least 3".into()));
    }
    let points = cloud.points();
    let n = points.len();
    let graph = KdTree::new(points).neighbor_graph(k);
    let cos_limit = max_angle_deg.to_radians().cos();
    let mut assigned = vec![false; n];
    let mut tried = vec![false; n];
    let mut in_region = vec![false; n];
    let mut regions = Vec::new();

    for seed in 0..n {
        if assigned[seed] || tried[seed] {
            continue;
        }
        tried[seed] = true;
        let mut fit = PlaneFit::new(&points[seed], &normals[seed]);
        let mut members = vec![seed];
        in_region[seed] = true;
        let mut head = 0;
        while head < members.len() {
            let current = members[head];
            head += 1;
            for &j in &graph[current] {
                if assigned[j] || in_region[j] {
                    continue;
                }
                let cos = fit.normal.dot(&Vector3::from(normals[j])).abs();
                if cos >= cos_limit && fit.distance(&points[j]) <= max_plane_dist {
                    in_region[j] = true;
                    members.push(j);
                    fit.add(&points[j]);
                }
            }
        }
        for &m in &members {
            in_region[m] = false;
        }
        if members.len() >= min_region_size {
            for &m in &members {
                assigned[m] = true;
            }
            members.sort_unstable();
            regions.push(Region {
                point_indices: members,
                plane_normal: [fit.normal[0], fit.normal[1], fit.normal[2]],
                plane_offset: fit.offset,
            });
        }
    }
    Ok(regions)
}

/// A set of scene points with its box, as grouped by the hierarchy.
#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    pub point_indices: Vec<usize>,
    pub bbox: Box3,
}

impl Group {
    pub fn new(points: &[Point], mut point_indices: Vec<usize>) -> Option<Self> {
        point_indices.sort_unstable();
        let bbox = Box3::from_indices(points, &point_indices)?;
        Some(Self { point_indices, bbox })
    }

    fn merge(&self, other: &Group) -> Group {
        let mut point_indices = Vec::with_capacity(self.point_indices.len() + other.point_indices.len());
        point_indices.extend_from_slice(&self.point_indices);
        point_indices.extend_from_slice(&other.point_indices);
        point_indices.sort_unstable();
        Group { point_indices, bbox: self.bbox.union(&other.bbox) }
    }
}

/// Size plus volume similarity, each clamped to [0, 1]:
/// `1 - (|a| + |b|) / n` and
/// `1 - (vol(box(a ∪ b)) - vol(box a) - vol(box b)) / vol(scene)`.
pub fn similarity(a: &Group, b: &Group, scene_extent: &Box3, scene_point_count: usize) -> Result<f64> {
    let scene_volume = scene_extent.volume();
    if !(scene_volume > 0.0) {
        return Err(GssError::ZeroSceneVolume);
    }
    let size = 1.0 - (a.point_indices.len() + b.point_indices.len()) as f64 / scene_point_count as f64;
    let gap = a.bbox.union(&b.bbox).volume() - a.bbox.volume() - b.bbox.volume();
    let volume = 1.0 - gap / scene_volume;
    Ok(size.clamp(0.0, 1.0) + volume.clamp(0.0, 1.0))
}

#[derive(Debug, PartialEq)]
struct MergeCandidate {
    score: f64,
    a: usize,
    b: usize,
}

impl Eq for MergeCandidate {}

impl Ord for MergeCandidate {
    // Highest score first; ties favor the lexicographically lowest pair.
    fn cmp(&self, other: &Self) -> Ordering {
        self.score
            .total_cmp(&other.score)
            .then_with(|| (other.a, other.b).cmp(&(self.a, self.b)))
    }
}

impl PartialOrd for MergeCandidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// One proposal per region, then one per merge of the most similar pair of
/// live groups, until a single group is left or `max_proposals` have been
/// emitted. Merged groups get the next free id, so ties between equal scores
/// go to the pair of oldest groups. Proposals with `max_points` or more
/// points are dropped at the end.
pub fn hac_proposals(
    regions: &[Region],
    cloud: &PointCloud,
    max_proposals: usize,
    max_points: usize,
) -> Result<Vec<Proposal>> {
    if regions.is_empty() {
        return Err(GssError::NoRegions);
    }
    let points = cloud.points();
    let extent = Box3::from_points(points).ok_or(GssError::EmptyScene)?;
    let total = points.len();
    let mut groups: Vec<Group> = regions
        .iter()
        .map(|r| Group::new(points, r.point_indices.clone()).ok_or(GssError::NoRegions))
        .collect::<Result<_>>()?;
    let mut emitted: Vec<usize> = (0..groups.len().min(max_proposals)).collect();
    let mut alive = vec![true; groups.len()];
    let mut live = groups.len();
    let mut heap = BinaryHeap::new();
    if groups.len() > 1 && emitted.len() < max_proposals {
        for a in 0..groups.len() {
            for b in a + 1..groups.len() {
                let score = similarity(&groups[a], &groups[b], &extent, total)?;
                heap.push(MergeCandidate { score, a, b });
            }
        }
    }
    while live > 1 && emitted.len() < max_proposals {
        let Some(MergeCandidate { a, b, .. }) = heap.pop() else { break };
        if !alive[a] || !alive[b] {
            continue;
        }
        let merged = groups[a].merge(&groups[b]);
        alive[a] = false;
        alive[b] = false;
        let id = groups.len();
        for other in 0..id {
            if alive[other] {
                let score = similarity(&groups[other], &merged, &extent, total)?;
                heap.push(MergeCandidate { score, a: other, b: id });
            }
        }
        groups.push(merged);
        alive.push(true);
        live -= 1;
        emitted.push(id);
    }
    Ok(emitted
        .into_iter()
        .map(|g| &groups[g])
        .filter(|g| g.point_indices.len() < max_points)
        .map(|g| Proposal {
            bbox: g.bbox,
            point_indices: g.point_indices.clone(),
            score: 1.0,
            scene_id: cloud.id().to_string(),
        })
        .collect())
}

/// Greedy NMS: visit by descending score (then more points, then lower
/// index) and keep a proposal only if its IoU with every kept one is below
/// `iou_threshold`.
pub fn nms(proposals: &[Proposal], iou_threshold: f64) -> Vec<Proposal> {
    let mut order: Vec<usize> = (0..proposals.len()).collect();
    order.sort_by(|&i, &j| {
        let (a, b) = (&proposals[i], &proposals[j]);
        b.score
            .total_cmp(&a.score)
            .then(b.point_indices.len().cmp(&a.point_indices.len()))
            .then(i.cmp(&j))
    });
    let mut kept: Vec<&Proposal> = Vec::new();
    for i in order {
        let cand = &proposals[i];
        if kept.iter().all(|k| iou3d(&k.bbox, &cand.bbox) < iou_threshold) {
            kept.push(cand);
        }
    }
    kept.into_iter().cloned().collect()
}

/// Normals → jitter → region growing → grouping → NMS on one scene.
///
/// Regions, grouping and suppression run on the jittered copy; returned
/// boxes are the extents of the member points in the original scene.
pub fn generate_proposals(scene: &PointCloud, params: &GssParams, seed: u64) -> Result<Vec<Proposal>> {
    params.validate()?;
    if scene.is_empty() {
        return Err(GssError::EmptyScene);
    }
    if scene.len() < params.min_region_size.max(params.k + 1) {
        return Ok(Vec::new());
    }
    let with_normals = estimate_normals(scene, params.k)?;
    let jittered = apply_jitter(&with_normals, params.jitter_sigma, seed)?;
    let plane_dist = match params.max_plane_dist {
        Some(d) => d,
        None => 0.01 * Box3::from_points(jittered.points()).ok_or(GssError::EmptyScene)?.diagonal(),
    };
    let regions = detect_regions(&jittered, params.k, params.max_angle_deg, params.min_region_size, plane_dist)?;
    if regions.is_empty() {
        return Ok(Vec::new());
    }
    let candidates = hac_proposals(&regions, &jittered, params.max_proposals, params.max_proposal_points)?;
    let kept = nms(&candidates, params.nms_iou);
    Ok(kept
        .into_iter()
        .map(|mut p| {
            p.bbox = Box3::from_indices(scene.points(), &p.point_indices).expect("non-empty proposal");
            p.scene_id = scene.id().to_string();
            p
        })
        .collect())
}

/// One line of the proposal / detection JSON-lines format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalRecord {
    pub scene_id: String,
    #[serde(rename = "box")]
    pub bbox: Box3,
    #[serde(default)]
    pub point_indices: Vec<usize>,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<u32>,
}

impl From<&Proposal> for ProposalRecord {
    fn from(p: &Proposal) -> Self {
        Self {
            scene_id: p.scene_id.clone(),
            bbox: p.bbox,
            point_indices: p.point_indices.clone(),
            score: p.score,
            class: None,
        }
    }
}

impl From<ProposalRecord> for Proposal {
    fn from(r: ProposalRecord) -> Self {
        Self { bbox: r.bbox, point_indices: r.point_indices, score: r.score, scene_id: r.scene_id }
    }
}

pub fn records_to_jsonl(records: &[ProposalRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("serializable record"));
        out.push('\n');
    }
    out
}

pub fn proposals_to_jsonl(proposals: &[Proposal]) -> String {
    records_to_jsonl(&proposals.iter().map(ProposalRecord::from).collect::<Vec<_>>())
}

/// Parse JSON lines; blank lines are skipped. Errors carry the 1-based line.
pub fn records_from_jsonl(text: &str) -> std::result::Result<Vec<ProposalRecord>, (usize, String)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| (i + 1, e.to_string())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pointset::seeded_rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn unit_cube_at(x: f64) -> Box3 {
        Box3::new([x, 0.0, 0.0], [x + 1.0, 1.0, 1.0]).unwrap()
    }

    #[test]
    fn iou_closed_forms() {
        assert_eq!(iou3d(&unit_cube_at(0.0), &unit_cube_at(0.0)), 1.0);
        assert_eq!(iou3d(&unit_cube_at(0.0), &unit_cube_at(2.0)), 0.0);
        assert!((iou3d(&unit_cube_at(0.0), &unit_cube_at(0.5)) - 1.0 / 3.0).abs() < 1e-15);
        let flat = Box3::new([0.0; 3], [1.0, 1.0, 0.0]).unwrap();
        assert_eq!(iou3d(&flat, &flat), 0.0);
        assert!(Box3::new([1.0, 0.0, 0.0], [0.0, 1.0, 1.0]).is_none());
    }

    fn arb_box() -> impl Strategy<Value = Box3> {
        (prop::array::uniform3(-5.0f64..5.0), prop::array::uniform3(0.0f64..4.0))
            .prop_map(|(lo, ext)| Box3::new(lo, [lo[0] + ext[0], lo[1] + ext[1], lo[2] + ext[2]]).unwrap())
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
            let ab = iou3d(&a, &b);
            prop_assert_eq!(ab, iou3d(&b, &a));
            prop_assert!((0.0..=1.0).contains(&ab));
            if a.volume() > 0.0 {
                prop_assert_eq!(iou3d(&a, &a), 1.0);
            }
        }
    }

    /// Grid plane with `nx * ny` points; `axis` is the normal direction.
    fn plane_points(nx: usize, ny: usize, axis: usize, offset: Point, step: f64) -> Vec<Point> {
        let mut out = Vec::new();
        for i in 0..nx {
            for j in 0..ny {
                let (u, v) = (i as f64 * step, j as f64 * step);
                let p = match axis {
                    0 => [0.0, u, v],
                    1 => [u, 0.0, v],
                    _ => [u, v, 0.0],
                };
                out.push([p[0] + offset[0], p[1] + offset[1], p[2] + offset[2]]);
            }
        }
        out
    }

    fn with_normals(points: Vec<Point>) -> PointCloud {
        estimate_normals(&PointCloud::new("s", points).unwrap(), 12).unwrap()
    }

    #[test]
    fn single_plane_is_one_region() {
        let cloud = with_normals(plane_points(20, 10, 2, [0.0; 3], 0.1));
        let regions = detect_regions(&cloud, 12, 20.0, 50, 0.01).unwrap();
        assert_eq!(regions.len(), 1);
        assert_eq!(regions[0].point_indices.len(), 200);
        assert_eq!(regions[0].plane_normal, [0.0, 0.0, 1.0]);
    }

    #[test]
    fn small_plane_is_dropped() {
        let cloud = with_normals(plane_points(8, 5, 2, [0.0; 3], 0.1));
        assert!(detect_regions(&cloud, 12, 20.0, 50, 0.01).unwrap().is_empty());
    }

    #[test]
    fn two_orthogonal_planes() {
        let mut pts = plane_points(10, 10, 2, [0.0; 3], 0.1);
        pts.extend(plane_points(10, 10, 0, [5.0, 0.0, 0.0], 0.1));
        let cloud = with_normals(pts);
        let regions = detect_regions(&cloud, 12, 20.0, 50, 0.05).unwrap();
        assert_eq!(regions.len(), 2);
        assert_eq!(regions[0].point_indices, (0..100).collect::<Vec<_>>());
        assert_eq!(regions[1].point_indices, (100..200).collect::<Vec<_>>());
    }

    #[test]
    fn missing_normals() {
        let cloud = PointCloud::new("s", plane_points(5, 5, 2, [0.0; 3], 0.1)).unwrap();
        assert!(matches!(detect_regions(&cloud, 12, 20.0, 5, 0.1), Err(GssError::MissingNormals)));
    }

    fn group(points: &[Point], idx: Vec<usize>) -> Group {
        Group::new(points, idx).unwrap()
    }

    #[test]
    fn similarity_hand_arithmetic() {
        // Scene extent 10 x 10 x 10 = 1000 with 100 points.
        // a: box [0,1]^3 (vol 1, 2 points); b: box [2,3]x[0,1]x[0,2] (vol 2, 3 points).
        // union box [0,3]x[0,1]x[0,2] vol 6 → gap 3 → s_vol = 1 - 3/1000.
        // s_size = 1 - 5/100.
        let pts = vec![
            [0.0, 0.0, 0.0],
            [1.0, 1.0, 1.0],
            [2.0, 0.0, 0.0],
            [3.0, 1.0, 2.0],
            [2.5, 0.5, 1.0],
        ];
        let a = group(&pts, vec![0, 1]);
        let b = group(&pts, vec![2, 3, 4]);
        let scene = Box3::new([0.0; 3], [10.0; 3]).unwrap();
        let s = similarity(&a, &b, &scene, 100).unwrap();
        assert!((s - (0.95 + 0.997)).abs() < 1e-12);
        let flat = Box3::new([0.0; 3], [1.0, 1.0, 0.0]).unwrap();
        assert!(matches!(similarity(&a, &b, &flat, 100), Err(GssError::ZeroSceneVolume)));
    }

    #[test]
    fn similarity_limits() {
        let pts = vec![[0.0, 0.0, 0.0], [0.01, 0.01, 0.01], [0.02, 0.0, 0.0], [0.03, 0.01, 0.01], [100.0; 3]];
        let scene = Box3::from_points(&pts).unwrap();
        let near = similarity(&group(&pts, vec![0, 1]), &group(&pts, vec![2, 3]), &scene, 10_000).unwrap();
        assert!(near > 1.999);
        let spanning = similarity(&group(&pts, vec![0]), &group(&pts, vec![4]), &scene, 10_000).unwrap();
        assert!(spanning - 1.0 < 1e-3);
    }

    fn region(idx: Vec<usize>) -> Region {
        Region { point_indices: idx, plane_normal: [0.0, 0.0, 1.0], plane_offset: 0.0 }
    }

    fn blob_cloud(centers: &[Point], per: usize, seed: u64) -> (PointCloud, Vec<Region>) {
        let mut rng = seeded_rng(seed);
        let mut pts = Vec::new();
        let mut regions = Vec::new();
        for c in centers {
            let start = pts.len();
            for _ in 0..per {
                pts.push([
                    c[0] + rng.random_range(-0.2..0.2),
                    c[1] + rng.random_range(-0.2..0.2),
                    c[2] + rng.random_range(-0.2..0.2),
                ]);
            }
            regions.push(region((start..pts.len()).collect()));
        }
        (PointCloud::new("blobs", pts).unwrap(), regions)
    }

    #[test]
    fn hac_counts() {
        let (cloud, regions) = blob_cloud(&[[0.0; 3]], 10, 1);
        assert_eq!(hac_proposals(&regions, &cloud, 1000, 15_000).unwrap().len(), 1);
        let (cloud, regions) = blob_cloud(&[[0.0; 3], [3.0, 0.0, 0.0], [0.0, 5.0, 0.0]], 10, 2);
        let props = hac_proposals(&regions, &cloud, 1000, 15_000).unwrap();
        assert_eq!(props.len(), 5);
        assert_eq!(props[4].point_indices.len(), 30);
        assert!(matches!(hac_proposals(&[], &cloud, 10, 10), Err(GssError::NoRegions)));
        assert_eq!(hac_proposals(&regions, &cloud, 4, 15_000).unwrap().len(), 4);
        // Nothing reaches 30 points when the cap is 30.
        assert!(hac_proposals(&regions, &cloud, 1000, 30).unwrap().iter().all(|p| p.point_indices.len() < 30));
    }

    /// Exhaustive simulation: at every step score all live pairs, take the
    /// best (lowest pair on ties).
    fn brute_merge_order(cloud: &PointCloud, regions: &[Region]) -> Vec<Vec<usize>> {
        let pts = cloud.points();
        let extent = Box3::from_points(pts).unwrap();
        let mut live: Vec<(usize, Group)> =
            regions.iter().enumerate().map(|(i, r)| (i, group(pts, r.point_indices.clone()))).collect();
        let mut next = live.len();
        let mut out = Vec::new();
        while live.len() > 1 {
            let mut best: Option<(f64, usize, usize)> = None;
            for x in 0..live.len() {
                for y in x + 1..live.len() {
                    let s = similarity(&live[x].1, &live[y].1, &extent, pts.len()).unwrap();
                    let key = (live[x].0.min(live[y].0), live[x].0.max(live[y].0));
                    let better = match best {
                        None => true,
                        Some((bs, bx, by)) => {
                            let bkey = (live[bx].0.min(live[by].0), live[bx].0.max(live[by].0));
                            s > bs || (s == bs && key < bkey)
                        }
                    };
                    if better {
                        best = Some((s, x, y));
                    }
                }
            }
            let (_, x, y) = best.unwrap();
            let merged = live[x].1.merge(&live[y].1);
            out.push(merged.point_indices.clone());
            live.remove(y);
            live.remove(x);
            live.push((next, merged));
            next += 1;
        }
        out
    }

    #[test]
    fn merge_order_matches_exhaustive_simulation() {
        for seed in 0..10 {
            let mut rng = seeded_rng(seed);
            let centers: Vec<Point> =
                (0..4).map(|_| [rng.random_range(0.0..6.0), rng.random_range(0.0..6.0), rng.random_range(0.0..2.0)]).collect();
            let (cloud, regions) = blob_cloud(&centers, 5 + seed as usize, seed);
            let props = hac_proposals(&regions, &cloud, 1000, 15_000).unwrap();
            let merges: Vec<Vec<usize>> = props[4..].iter().map(|p| p.point_indices.clone()).collect();
            assert_eq!(merges, brute_merge_order(&cloud, &regions));
        }
    }

    fn proposal(b: Box3, score: f64, n: usize) -> Proposal {
        Proposal { bbox: b, point_indices: (0..n).collect(), score, scene_id: "s".into() }
    }

    #[test]
    fn nms_basics() {
        let one = vec![proposal(unit_cube_at(0.0), 1.0, 3)];
        assert_eq!(nms(&one, 0.75), one);
        let two = vec![proposal(unit_cube_at(0.0), 0.8, 3), proposal(unit_cube_at(0.0), 0.9, 3)];
        let kept = nms(&two, 0.75);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].score, 0.9);
    }

    /// O(n²) reference: suppression matrix over the sorted order.
    fn brute_nms(props: &[Proposal], thr: f64) -> Vec<Proposal> {
        let n = props.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| {
            props[j]
                .score
                .partial_cmp(&props[i].score)
                .unwrap()
                .then(props[j].point_indices.len().cmp(&props[i].point_indices.len()))
                .then(i.cmp(&j))
        });
        let mut suppressed = vec![false; n];
        let mut out = Vec::new();
        for (rank, &i) in order.iter().enumerate() {
            if suppressed[i] {
                continue;
            }
            out.push(props[i].clone());
            for &j in &order[rank + 1..] {
                if iou3d(&props[i].bbox, &props[j].bbox) >= thr {
                    suppressed[j] = true;
                }
            }
        }
        out
    }

    fn arb_proposals() -> impl Strategy<Value = Vec<Proposal>> {
        prop::collection::vec((arb_box(), 0u8..5, 1usize..4), 1..50).prop_map(|v| {
            v.into_iter().map(|(b, s, n)| proposal(b, s as f64 / 4.0, n)).collect()
        })
    }

    proptest! {
        #[test]
        fn nms_matches_reference(props in arb_proposals(), thr in 0.05f64..0.95) {
            let kept = nms(&props, thr);
            prop_assert_eq!(&kept, &brute_nms(&props, thr));
            for i in 0..kept.len() {
                for j in i + 1..kept.len() {
                    prop_assert!(iou3d(&kept[i].bbox, &kept[j].bbox) < thr);
                }
            }
        }
    }

    #[test]
    fn proposals_for_single_plane_scene() {
        let scene = PointCloud::new("one", plane_points(20, 10, 2, [0.0; 3], 0.1)).unwrap();
        let props = generate_proposals(&scene, &GssParams::default(), 3).unwrap();
        assert_eq!(props.len(), 1);
        assert_eq!(props[0].point_indices.len(), 200);
        assert_eq!(props[0].bbox, Box3::from_points(scene.points()).unwrap());
        assert_eq!(props[0].scene_id, "one");
    }

    #[test]
    fn noise_scene_has_no_proposals() {
        let mut rng = seeded_rng(4);
        let pts = (0..300).map(|_| [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()]).collect();
        let scene = PointCloud::new("noise", pts).unwrap();
        assert!(generate_proposals(&scene, &GssParams::default(), 1).unwrap().is_empty());
        let tiny = PointCloud::new("tiny", vec![[0.0; 3]; 3]).unwrap();
        assert!(generate_proposals(&tiny, &GssParams::default(), 1).unwrap().is_empty());
    }

    #[test]
    fn jsonl_round_trip() {
        let p = proposal(unit_cube_at(0.25), 0.5, 3);
        let text = proposals_to_jsonl(std::slice::from_ref(&p));
        assert_eq!(
            text,
            "{\"scene_id\":\"s\",\"box\":{\"min\":[0.25,0.0,0.0],\"max\":[1.25,1.0,1.0]},\"point_indices\":[0,1,2],\"score\":0.5}\n"
        );
        let back = records_from_jsonl(&text).unwrap();
        assert_eq!(Proposal::from(back[0].clone()), p);
        assert_eq!(records_from_jsonl("{}\n").unwrap_err().0, 1);
    }
}
