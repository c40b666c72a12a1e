//! Reading inputs from disk and writing outputs atomically.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use sl3d_core::eval::{AlignmentMap, DetectionRecord};
use sl3d_core::gss::{records_from_jsonl, Proposal, ProposalRecord};
use sl3d_core::pointset::{derive_seed, load_cloud, prepare_object, CloudFormat, ObjectSample, PointCloud};
use sl3d_core::selflabel::LabelSet;

use crate::Failure;

/// Write via a temporary file in the same directory, then rename, so a
/// reader never sees a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), Failure> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| Failure::data(format!("{}: {e}", dir.display())))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Failure::data(format!("{}: {e}", dir.display())))?;
    tmp.write_all(contents).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    tmp.persist(path).map_err(|e| Failure::data(format!("{}: {}", path.display(), e.error)))?;
    Ok(())
}

pub fn read_text(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

/// Point cloud files in `dir` (by extension), sorted by file name.
pub fn cloud_files(dir: &Path) -> Result<Vec<PathBuf>, Failure> {
    let entries = std::fs::read_dir(dir).map_err(|e| Failure::data(format!("{}: {e}", dir.display())))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Failure::data(format!("{}: {e}", dir.display())))?.path();
        if path.is_file() && CloudFormat::from_path(&path).is_some() {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

pub fn load(path: &Path) -> Result<PointCloud, Failure> {
    let format = CloudFormat::from_path(path)
        .ok_or_else(|| Failure::data(format!("{}: unknown point cloud extension", path.display())))?;
    load_cloud(path, format).map_err(|e| Failure::data(e.to_string()))
}

/// Encoder-ready objects with their majority ground-truth label, if any.
pub struct Objects {
    pub samples: Vec<ObjectSample>,
    pub gt: Vec<Option<u32>>,
}

impl Objects {
    /// Ground truth for every object, or `None` if any object lacks it.
    pub fn complete_gt(&self) -> Option<Vec<u32>> {
        self.gt.iter().copied().collect()
    }

    pub fn labeled(&self) -> Result<Vec<(ObjectSample, u32)>, Failure> {
        self.samples
            .iter()
            .zip(&self.gt)
            .map(|(s, g)| {
                g.map(|g| (s.clone(), g))
                    .ok_or_else(|| Failure::data(format!("object '{}' has no ground-truth label", s.source_id)))
            })
            .collect()
    }
}

fn prepare(cloud: &PointCloud, count: usize, seed: u64) -> Result<ObjectSample, Failure> {
    prepare_object(cloud, count, seed).map_err(|e| Failure::data(format!("{}: {e}", cloud.id())))
}

/// Every cloud file in `dir` as one object.
pub fn load_objects(dir: &Path, count: usize, seed: u64) -> Result<Objects, Failure> {
    let mut samples = Vec::new();
    let mut gt = Vec::new();
    for (i, path) in cloud_files(dir)?.iter().enumerate() {
        let cloud = load(path)?;
        gt.push(cloud.majority_label());
        samples.push(prepare(&cloud, count, derive_seed(seed, i as u64))?);
    }
    Ok(Objects { samples, gt })
}

pub fn proposals_path(dir: &Path, scene_id: &str) -> PathBuf {
    dir.join(format!("{scene_id}.proposals.jsonl"))
}

pub fn read_records(path: &Path) -> Result<Vec<ProposalRecord>, Failure> {
    records_from_jsonl(&read_text(path)?).map_err(|(line, e)| Failure::data(format!("{}:{line}: {e}", path.display())))
}

/// A scene and its proposals, checked against each other.
pub fn load_scene_proposals(scene_path: &Path, proposals_dir: &Path) -> Result<(PointCloud, Vec<Proposal>), Failure> {
    let scene = load(scene_path)?;
    let path = proposals_path(proposals_dir, scene.id());
    let proposals: Vec<Proposal> = read_records(&path)?.into_iter().map(Proposal::from).collect();
    if let Some(p) = proposals.iter().find(|p| p.scene_id != scene.id() || p.point_indices.iter().any(|&i| i >= scene.len())) {
        return Err(Failure::data(format!("{}: proposal does not fit scene '{}' ({})", path.display(), scene.id(), p.scene_id)));
    }
    Ok((scene, proposals))
}

/// Objects cut out of scenes by their proposals, ids `<scene>#<index>`.
pub fn load_proposal_objects(scenes: &Path, proposals: &Path, count: usize, seed: u64) -> Result<Objects, Failure> {
    let mut samples = Vec::new();
    let mut gt = Vec::new();
    for path in cloud_files(scenes)? {
        let (scene, props) = load_scene_proposals(&path, proposals)?;
        for (i, p) in props.iter().enumerate() {
            let cloud = scene.select(&p.point_indices).with_id(format!("{}#{i}", scene.id()));
            gt.push(cloud.majority_label());
            let mut sample = prepare(&cloud, count, derive_seed(seed, samples.len() as u64))?;
            sample.source_box = Some(i);
            samples.push(sample);
        }
    }
    Ok(Objects { samples, gt })
}

pub fn read_labels(path: &Path, classes: usize) -> Result<LabelSet, Failure> {
    LabelSet::from_csv(&read_text(path)?, classes).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

pub fn read_alignment(path: &Path) -> Result<AlignmentMap, Failure> {
    serde_json::from_str(&read_text(path)?).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

/// JSONL detections from one file or every `*.jsonl` in a directory.
pub fn read_detections(path: &Path) -> Result<Vec<DetectionRecord>, Failure> {
    let files = if path.is_dir() {
        let mut f: Vec<PathBuf> = std::fs::read_dir(path)
            .map_err(|e| Failure::data(format!("{}: {e}", path.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        f.sort();
        f
    } else {
        vec![path.to_path_buf()]
    };
    let mut out = Vec::new();
    for f in files {
        for r in read_records(&f)? {
            out.push(DetectionRecord::try_from(r).map_err(|e| Failure::data(format!("{}: {e}", f.display())))?);
        }
    }
    Ok(out)
}

/// One label per line; the unlabeled sentinel is written as -1.
pub fn point_labels_text(labels: &[u32]) -> String {
    let mut out = String::with_capacity(labels.len() * 3);
    for &l in labels {
        if l == sl3d_core::pointset::UNLABELED {
            out.push_str("-1\n");
        } else {
            out.push_str(&l.to_string());
            out.push('\n');
        }
    }
    out
}

pub fn parse_point_labels(path: &Path) -> Result<Vec<u32>, Failure> {
    read_text(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| match l.trim() {
            "-1" => Ok(sl3d_core::pointset::UNLABELED),
            v => v.parse().map_err(|_| Failure::data(format!("{}:{}: bad label '{v}'", path.display(), i + 1))),
        })
        .collect()
}

/// Run `f` over `items` on up to `jobs` threads; results keep input order.
pub fn ordered_map<T: Sync, R: Send>(items: &[T], jobs: usize, f: impl Fn(usize, &T) -> R + Sync) -> Vec<R> {
    if jobs <= 1 || items.len() <= 1 {
        return items.iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let chunk = items.len().div_ceil(jobs);
    let f = &f;
    std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .enumerate()
            .map(|(c, part)| {
                s.spawn(move || part.iter().enumerate().map(|(i, t)| f(c * chunk + i, t)).collect::<Vec<R>>())
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    })
}
