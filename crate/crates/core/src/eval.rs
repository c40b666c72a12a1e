//! Cluster purity, pseudo-class alignment, k-NN accuracy, detection AP and
//! point-level IoU.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gss::{iou3d, Box3, ProposalRecord};
use crate::pointset::{PointCloud, UNLABELED};
use crate::selflabel::LabelSet;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("{what}: expected {expected} entries, found {found}")]
    LengthMismatch { what: String, expected: usize, found: usize },
    #[error("training set is empty")]
    EmptyTrainSet,
    #[error("proposal for scene '{found}' applied to scene '{expected}'")]
    SceneMismatch { expected: String, found: String },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, EvalError>;

fn check_len(what: &str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(EvalError::LengthMismatch { what: what.to_string(), expected, found });
    }
    Ok(())
}

/// Ground-truth class counts of every non-empty pseudo class.
fn cluster_counts(labels: &LabelSet, gt: &[u32]) -> Result<BTreeMap<usize, BTreeMap<u32, usize>>> {
    check_len("ground-truth labels", labels.len(), gt.len())?;
    let mut counts: BTreeMap<usize, BTreeMap<u32, usize>> = BTreeMap::new();
    for (&l, &g) in labels.labels.iter().zip(gt) {
        *counts.entry(l).or_default().entry(g).or_default() += 1;
    }
    Ok(counts)
}

/// Most frequent class and its count; ties go to the lower class id.
fn majority(counts: &BTreeMap<u32, usize>) -> (u32, usize) {
    counts
        .iter()
        .fold((u32::MAX, 0), |best, (&c, &n)| if n > best.1 { (c, n) } else { best })
}

/// Unweighted mean over non-empty pseudo classes of majority-count / size.
pub fn mean_purity(labels: &LabelSet, gt: &[u32]) -> Result<f64> {
    let counts = cluster_counts(labels, gt)?;
    if counts.is_empty() {
        return Err(EvalError::InvalidInput("no samples".into()));
    }
    let total: f64 = counts
        .values()
        .map(|c| majority(c).1 as f64 / c.values().sum::<usize>() as f64)
        .sum();
    Ok(total / counts.len() as f64)
}

/// Many-to-one map from pseudo classes to ground-truth classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignmentMap {
    pub mapping: BTreeMap<usize, u32>,
    pub obtained_classes: usize,
}

impl AlignmentMap {
    pub fn map(&self, pseudo: usize) -> Option<u32> {
        self.mapping.get(&pseudo).copied()
    }
}

/// Map each non-empty pseudo class to its majority ground-truth class.
pub fn align_classes(labels: &LabelSet, gt: &[u32]) -> Result<AlignmentMap> {
    let counts = cluster_counts(labels, gt)?;
    let mapping: BTreeMap<usize, u32> = counts.iter().map(|(&l, c)| (l, majority(c).0)).collect();
    let mut image: Vec<u32> = mapping.values().copied().collect();
    image.sort_unstable();
    image.dedup();
    Ok(AlignmentMap { mapping, obtained_classes: image.len() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KnnResult {
    pub k: usize,
    pub top1: f64,
    pub top5: f64,
}

fn l2_normalized(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter().map(|x| x / n).collect()
    } else {
        v.to_vec()
    }
}

/// Classes ranked by vote count (descending), ties to the lower class id.
fn ranked_votes(neighbors: impl Iterator<Item = u32>) -> Vec<u32> {
    let mut votes: BTreeMap<u32, usize> = BTreeMap::new();
    for c in neighbors {
        *votes.entry(c).or_default() += 1;
    }
    let mut ranked: Vec<(u32, usize)> = votes.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.into_iter().map(|(c, _)| c).collect()
}

/// Top-1 / top-5 accuracy (percent) of majority voting among the `k`
/// nearest training embeddings, on L2-normalized vectors.
pub fn knn_eval(
    train: &[Vec<f64>],
    train_labels: &[u32],
    test: &[Vec<f64>],
    test_labels: &[u32],
    k: usize,
) -> Result<KnnResult> {
    if train.is_empty() {
        return Err(EvalError::EmptyTrainSet);
    }
    check_len("training labels", train.len(), train_labels.len())?;
    check_len("test labels", test.len(), test_labels.len())?;
    if k == 0 || k > train.len() {
        return Err(EvalError::InvalidInput(format!("k = {k} with {} training samples", train.len())));
    }
    let dim = train[0].len();
    if let Some(bad) = train.iter().chain(test).find(|v| v.len() != dim) {
        return Err(EvalError::LengthMismatch { what: "embedding".into(), expected: dim, found: bad.len() });
    }
    if test.is_empty() {
        return Ok(KnnResult { k, top1: 0.0, top5: 0.0 });
    }
    let train: Vec<Vec<f64>> = train.iter().map(|v| l2_normalized(v)).collect();
    let (mut top1, mut top5) = (0usize, 0usize);
    let mut dists: Vec<(f64, usize)> = Vec::with_capacity(train.len());
    for (q, &truth) in test.iter().zip(test_labels) {
        let q = l2_normalized(q);
        dists.clear();
        dists.extend(train.iter().enumerate().map(|(i, t)| {
            (t.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), i)
        }));
        dists.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let ranked = ranked_votes(dists[..k].iter().map(|&(_, i)| train_labels[i]));
        if ranked[0] == truth {
            top1 += 1;
        }
        if ranked.iter().take(5).any(|&c| c == truth) {
            top5 += 1;
        }
    }
    let n = test.len() as f64;
    Ok(KnnResult { k, top1: 100.0 * top1 as f64 / n, top5: 100.0 * top5 as f64 / n })
}

/// A classified, scored box.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRecord {
    pub scene_id: String,
    pub bbox: Box3,
    pub class: u32,
    pub score: f64,
}

impl DetectionRecord {
    pub fn new(scene_id: impl Into<String>, bbox: Box3, class: u32, score: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&score) {
            return Err(EvalError::InvalidInput(format!("score {score} outside [0, 1]")));
        }
        Ok(Self { scene_id: scene_id.into(), bbox, class, score })
    }

    pub fn to_record(&self) -> ProposalRecord {
        ProposalRecord {
            scene_id: self.scene_id.clone(),
            bbox: self.bbox,
            point_indices: Vec::new(),
            score: self.score,
            class: Some(self.class),
        }
    }
}

impl TryFrom<ProposalRecord> for DetectionRecord {
    type Error = EvalError;

    fn try_from(r: ProposalRecord) -> Result<Self> {
        let class = r
            .class
            .ok_or_else(|| EvalError::InvalidInput(format!("record for scene '{}' has no class", r.scene_id)))?;
        Self::new(r.scene_id, r.bbox, class, r.score)
    }
}

/// Ground-truth boxes use the same record with the score ignored.
pub type GtBox = DetectionRecord;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApReport {
    /// Classes with at least one ground-truth box.
    pub per_class: BTreeMap<u32, f64>,
    pub map: f64,
}

/// All-point interpolated AP from a ranked TP/FP sequence.
pub fn average_precision(tp: &[bool], positives: usize) -> f64 {
    if positives == 0 {
        return 0.0;
    }
    let mut recall = vec![0.0];
    let mut precision = vec![0.0];
    let mut hits = 0usize;
    for (i, &t) in tp.iter().enumerate() {
        hits += t as usize;
        recall.push(hits as f64 / positives as f64);
        precision.push(hits as f64 / (i + 1) as f64);
    }
    recall.push(1.0);
    precision.push(0.0);
    for i in (0..precision.len() - 1).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    (1..recall.len()).map(|i| (recall[i] - recall[i - 1]) * precision[i]).sum()
}

/// Per-class AP at the IoU threshold and their mean.
///
/// Predictions of a class are visited by descending score (input order on
/// ties); each is a true positive when its best-IoU unmatched ground-truth
/// box of the same class and scene reaches the threshold.
pub fn map_at_iou(predictions: &[DetectionRecord], gt: &[GtBox], iou_threshold: f64) -> ApReport {
    let classes: Vec<u32> = {
        let mut c: Vec<u32> = gt.iter().map(|g| g.class).collect();
        c.sort_unstable();
        c.dedup();
        c
    };
    let mut per_class = BTreeMap::new();
    for &class in &classes {
        let gts: Vec<&GtBox> = gt.iter().filter(|g| g.class == class).collect();
        let mut preds: Vec<&DetectionRecord> = predictions.iter().filter(|p| p.class == class).collect();
        preds.sort_by(|a, b| b.score.total_cmp(&a.score));
        let mut matched = vec![false; gts.len()];
        let tp: Vec<bool> = preds
            .iter()
            .map(|p| {
                let mut best: Option<(f64, usize)> = None;
                for (i, g) in gts.iter().enumerate() {
                    if matched[i] || g.scene_id != p.scene_id {
                        continue;
                    }
                    let iou = iou3d(&p.bbox, &g.bbox);
                    if best.is_none_or(|(b, _)| iou > b) {
                        best = Some((iou, i));
                    }
                }
                match best {
                    Some((iou, i)) if iou >= iou_threshold => {
                        matched[i] = true;
                        true
                    }
                    _ => false,
                }
            })
            .collect();
        per_class.insert(class, average_precision(&tp, gts.len()));
    }
    let map = if per_class.is_empty() { 0.0 } else { per_class.values().sum::<f64>() / per_class.len() as f64 };
    ApReport { per_class, map }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IouReport {
    /// `None` for classes absent from both predictions and ground truth.
    pub per_class: Vec<Option<f64>>,
    pub miou: f64,
}

/// Point IoU per class over all scenes. Points where either side is
/// [`UNLABELED`] are left out entirely.
pub fn miou(predicted: &[Vec<u32>], gt: &[Vec<u32>], num_classes: usize) -> Result<IouReport> {
    check_len("scenes", gt.len(), predicted.len())?;
    let mut inter = vec![0usize; num_classes];
    let mut union = vec![0usize; num_classes];
    for (p, g) in predicted.iter().zip(gt) {
        check_len("point labels", g.len(), p.len())?;
        for (&a, &b) in p.iter().zip(g) {
            if a == UNLABELED || b == UNLABELED {
                continue;
            }
            let (ai, bi) = (a as usize, b as usize);
            if ai >= num_classes || bi >= num_classes {
                return Err(EvalError::InvalidInput(format!("label {} outside {num_classes} classes", a.max(b))));
            }
            union[ai] += 1;
            if ai == bi {
                inter[ai] += 1;
            } else {
                union[bi] += 1;
            }
        }
    }
    let per_class: Vec<Option<f64>> =
        inter.iter().zip(&union).map(|(&i, &u)| (u > 0).then(|| i as f64 / u as f64)).collect();
    let present: Vec<f64> = per_class.iter().flatten().copied().collect();
    let miou = if present.is_empty() { 0.0 } else { present.iter().sum::<f64>() / present.len() as f64 };
    Ok(IouReport { per_class, miou })
}

/// Label every point with the class of the best covering box: highest
/// score, then smallest volume, then lowest index. Uncovered points get
/// [`UNLABELED`].
pub fn boxes_to_point_labels(boxes: &[DetectionRecord], scene: &PointCloud) -> Result<Vec<u32>> {
    if let Some(b) = boxes.iter().find(|b| b.scene_id != scene.id()) {
        return Err(EvalError::SceneMismatch { expected: scene.id().to_string(), found: b.scene_id.clone() });
    }
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&i, &j| {
        boxes[j]
            .score
            .total_cmp(&boxes[i].score)
            .then(boxes[i].bbox.volume().total_cmp(&boxes[j].bbox.volume()))
            .then(i.cmp(&j))
    });
    Ok(scene
        .points()
        .iter()
        .map(|p| order.iter().find(|&&i| boxes[i].bbox.contains(p)).map_or(UNLABELED, |&i| boxes[i].class))
        .collect())
}

/// Machine-readable metric summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub metric: String,
    pub value: f64,
    pub per_class: BTreeMap<String, f64>,
    pub config_digest: String,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable report")
    }

    pub fn to_table(&self) -> String {
        let mut out = format!("{:<24} {:>10}\n", "metric", "value");
        writeln!(out, "{:<24} {:>10.4}", self.metric, self.value).unwrap();
        for (class, v) in &self.per_class {
            writeln!(out, "  {:<22} {:>10.4}", class, v).unwrap();
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(l: &[usize], k: usize) -> LabelSet {
        LabelSet { labels: l.to_vec(), sample_ids: (0..l.len()).map(|i| i.to_string()).collect(), classes: k }
    }

    #[test]
    fn purity_examples() {
        assert_eq!(mean_purity(&labels(&[0, 0, 1, 1], 2), &[5, 5, 2, 2]).unwrap(), 1.0);
        let p = mean_purity(&labels(&[0, 0, 0, 1, 1], 2), &[0, 0, 1, 1, 1]).unwrap();
        assert!((p - 5.0 / 6.0).abs() < 1e-15);
        assert!(matches!(mean_purity(&labels(&[0], 2), &[0, 1]), Err(EvalError::LengthMismatch { .. })));
    }

    #[test]
    fn purity_permutation_invariant() {
        let l = [0, 1, 2, 2, 1, 0, 0, 2, 1, 1];
        let g = [3, 3, 1, 1, 0, 3, 0, 1, 0, 0];
        let base = mean_purity(&labels(&l, 3), &g).unwrap();
        let lp: Vec<usize> = l.iter().map(|&x| (x + 1) % 3).collect();
        let gp: Vec<u32> = g.iter().map(|&x| 7 - x).collect();
        assert_eq!(mean_purity(&labels(&lp, 3), &gp).unwrap(), base);
    }

    #[test]
    fn alignment_examples() {
        let a = align_classes(&labels(&[0, 0, 1, 1], 2), &[3, 3, 7, 7]).unwrap();
        assert_eq!(a.mapping, BTreeMap::from([(0, 3), (1, 7)]));
        assert_eq!(a.obtained_classes, 2);
        let a = align_classes(&labels(&[0, 0, 1, 1], 2), &[0, 0, 0, 1]).unwrap();
        assert_eq!(a.obtained_classes, 1);
        // Tie inside a cluster goes to the lower class id.
        let a = align_classes(&labels(&[0, 0], 2), &[4, 2]).unwrap();
        assert_eq!(a.map(0), Some(2));
        assert_eq!(a.map(1), None);
    }

    #[test]
    fn alignment_matches_counting_oracle() {
        let l = [0, 1, 2, 3, 4, 0, 1, 2, 3, 4, 0, 0, 4, 4, 2, 3, 3, 1];
        let g = [1, 2, 0, 0, 1, 1, 2, 2, 0, 3, 2, 1, 3, 3, 0, 1, 0, 2];
        let a = align_classes(&labels(&l, 5), &g).unwrap();
        for c in 0..5 {
            let mut count = [0usize; 4];
            for (li, gi) in l.iter().zip(&g) {
                if *li == c {
                    count[*gi as usize] += 1;
                }
            }
            let best = (0..4).max_by_key(|&i| (count[i], std::cmp::Reverse(i))).unwrap();
            assert_eq!(a.map(c), Some(best as u32));
        }
        assert!(a.obtained_classes <= 4);
    }

    #[test]
    fn knn_trivial_cases() {
        let train = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let r = knn_eval(&train, &[4, 9], &[vec![0.0, 2.0]], &[9], 1).unwrap();
        assert_eq!((r.top1, r.top5), (100.0, 100.0));
        let onehot: Vec<Vec<f64>> = (0..9).map(|i| (0..3).map(|c| (c == i % 3) as u8 as f64).collect()).collect();
        let lab: Vec<u32> = (0..9).map(|i| (i % 3) as u32).collect();
        assert_eq!(knn_eval(&onehot, &lab, &onehot, &lab, 3).unwrap().top1, 100.0);
        assert_eq!(knn_eval(&[], &[], &train, &[0, 0], 1), Err(EvalError::EmptyTrainSet));
        assert!(knn_eval(&train, &[0, 1], &train, &[0, 1], 3).is_err());
    }

    #[test]
    fn knn_matches_distance_matrix_oracle() {
        // 3 classes spread around three directions with deterministic wobble.
        let emb = |i: usize| {
            let c = (i % 3) as f64;
            let w = ((i * 37 % 11) as f64 - 5.0) * 0.13;
            vec![(c * 2.1 + w).cos(), (c * 2.1 + w).sin(), 0.3 + 0.05 * w]
        };
        let train: Vec<Vec<f64>> = (0..30).map(emb).collect();
        let train_l: Vec<u32> = (0..30).map(|i| (i % 3) as u32).collect();
        let test: Vec<Vec<f64>> = (30..45).map(emb).collect();
        let test_l: Vec<u32> = (30..45).map(|i| ((i + i / 7) % 3) as u32).collect();
        let r = knn_eval(&train, &train_l, &test, &test_l, 5).unwrap();

        let norm = |v: &Vec<f64>| {
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter().map(|x| x / n).collect::<Vec<_>>()
        };
        let (mut h1, mut h5) = (0, 0);
        for (q, &t) in test.iter().zip(&test_l) {
            let q = norm(q);
            let mut all: Vec<(f64, usize)> = train
                .iter()
                .enumerate()
                .map(|(i, v)| (norm(v).iter().zip(&q).map(|(a, b)| (a - b).powi(2)).sum(), i))
                .collect();
            all.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut votes = [0usize; 3];
            for &(_, i) in &all[..5] {
                votes[train_l[i] as usize] += 1;
            }
            let pred = (0..3).max_by_key(|&c| (votes[c], std::cmp::Reverse(c))).unwrap();
            h1 += (pred as u32 == t) as usize;
            h5 += (votes[t as usize] > 0) as usize;
        }
        assert_eq!(r.top1, 100.0 * h1 as f64 / 15.0);
        assert_eq!(r.top5, 100.0 * h5 as f64 / 15.0);
        assert!(r.top5 >= r.top1);
    }

    fn cube(x: f64) -> Box3 {
        Box3::new([x, 0.0, 0.0], [x + 1.0, 1.0, 1.0]).unwrap()
    }

    fn det(scene: &str, b: Box3, class: u32, score: f64) -> DetectionRecord {
        DetectionRecord::new(scene, b, class, score).unwrap()
    }

    #[test]
    fn ap_trivial_cases() {
        let gt = vec![det("s", cube(0.0), 0, 1.0)];
        let r = map_at_iou(&[det("s", cube(0.0), 0, 0.9)], &gt, 0.25);
        assert_eq!(r.map, 1.0);
        // IoU of cubes offset by 0.8 along x: 0.2 / 1.8 < 0.25.
        let r = map_at_iou(&[det("s", cube(0.8), 0, 0.9)], &gt, 0.25);
        assert_eq!(r.map, 0.0);
        // Wrong scene never matches.
        assert_eq!(map_at_iou(&[det("t", cube(0.0), 0, 0.9)], &gt, 0.25).map, 0.0);
        // Duplicates count once.
        let r = map_at_iou(&[det("s", cube(0.0), 0, 0.9), det("s", cube(0.0), 0, 0.8)], &gt, 0.25);
        assert_eq!(r.map, 1.0);
        assert!(DetectionRecord::new("s", cube(0.0), 0, 1.5).is_err());
    }

    /// Two classes, two gt boxes each, four predictions for class 0.
    ///
    /// Class 0 ranked: 0.9 TP, 0.8 FP (IoU 0), 0.7 TP, 0.6 FP (duplicate).
    /// precision 1, 1/2, 2/3, 2/4; recall 1/2, 1/2, 1, 1.
    /// Envelope over recall steps: 0→1/2 at 1, 1/2→1 at 2/3.
    /// AP0 = 0.5 * 1 + 0.5 * 2/3 = 5/6.
    /// Class 1 has one exact prediction for one of two boxes: AP1 = 1/2.
    pub(crate) fn two_class_fixture() -> (Vec<DetectionRecord>, Vec<GtBox>) {
        let gt = vec![
            det("a", cube(0.0), 0, 1.0),
            det("a", cube(5.0), 0, 1.0),
            det("a", cube(10.0), 1, 1.0),
            det("b", cube(0.0), 1, 1.0),
        ];
        let preds = vec![
            det("a", cube(0.1), 0, 0.9),
            det("a", cube(20.0), 0, 0.8),
            det("a", cube(5.2), 0, 0.7),
            det("a", cube(0.0), 0, 0.6),
            det("b", cube(0.0), 1, 0.5),
        ];
        (preds, gt)
    }

    #[test]
    fn ap_hand_table() {
        let (preds, gt) = two_class_fixture();
        let r = map_at_iou(&preds, &gt, 0.25);
        assert!((r.per_class[&0] - 5.0 / 6.0).abs() < 1e-15);
        assert_eq!(r.per_class[&1], 0.5);
        assert!((r.map - (5.0 / 6.0 + 0.5) / 2.0).abs() < 1e-15);
        let mut reversed = preds.clone();
        reversed.reverse();
        assert_eq!(map_at_iou(&reversed, &gt, 0.25), r);
    }

    #[test]
    fn miou_counting() {
        let g = vec![vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1]];
        let p = vec![vec![0, 0, 0, 1, 1, 1, 1, 1, 0, UNLABELED]];
        // class 0: inter 3, union |p0 ∪ g0| over labeled points = {0..4, 8} = 6
        // class 1: inter 3 (5,6,7), union {3,4,5,6,7,8} = 6
        let r = miou(&p, &g, 2).unwrap();
        assert_eq!(r.per_class, vec![Some(0.5), Some(0.5)]);
        assert_eq!(r.miou, 0.5);
        assert_eq!(miou(&g, &g, 2).unwrap().miou, 1.0);
        let none = vec![vec![0; 10]];
        assert_eq!(miou(&none, &g, 2).unwrap().per_class[1], Some(0.0));
        assert!(miou(&g, &[vec![0]], 2).is_err());
    }

    #[test]
    fn miou_symmetric_under_class_permutation() {
        let g = vec![vec![0, 1, 2, 2, 1, 0, UNLABELED], vec![2, 2, 1]];
        let p = vec![vec![0, 2, 2, 1, 1, 0, 1], vec![2, 0, 1]];
        let perm = |v: &Vec<Vec<u32>>| -> Vec<Vec<u32>> {
            v.iter().map(|s| s.iter().map(|&c| if c == UNLABELED { c } else { (c + 1) % 3 }).collect()).collect()
        };
        let (a, b) = (miou(&p, &g, 3).unwrap().miou, miou(&perm(&p), &perm(&g), 3).unwrap().miou);
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn point_labels_from_boxes() {
        let pts: Vec<_> = (0..10).map(|i| [i as f64 * 0.2, 0.5, 0.5]).collect();
        let scene = PointCloud::new("s", pts).unwrap();
        let half = det("s", Box3::new([0.0; 3], [0.9, 1.0, 1.0]).unwrap(), 3, 0.5);
        assert_eq!(boxes_to_point_labels(std::slice::from_ref(&half), &scene).unwrap(), [
            3, 3, 3, 3, 3, UNLABELED, UNLABELED, UNLABELED, UNLABELED, UNLABELED
        ]);
        let inner = det("s", Box3::new([0.3, 0.0, 0.0], [0.5, 1.0, 1.0]).unwrap(), 1, 0.9);
        let labels = boxes_to_point_labels(&[half.clone(), inner], &scene).unwrap();
        assert_eq!(&labels[..5], &[3, 3, 1, 3, 3]);
        let other = det("t", cube(0.0), 0, 0.5);
        assert!(matches!(boxes_to_point_labels(&[other], &scene), Err(EvalError::SceneMismatch { .. })));
    }

    #[test]
    fn ap_is_bounded() {
        assert_eq!(average_precision(&[], 3), 0.0);
        assert_eq!(average_precision(&[true, true], 2), 1.0);
        assert_eq!(average_precision(&[false, true], 1), 0.5);
    }
}
