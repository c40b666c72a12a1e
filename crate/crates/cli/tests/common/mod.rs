#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sl3d_core::eval::DetectionRecord;
use sl3d_core::gss::records_to_jsonl;
use sl3d_core::pointset::{save_cloud, CloudFormat, PointCloud};
use sl3d_core::synthdata::{gen_object_set, gen_scene, FloorSpec, ObjectSetSpec, Pose, Scene, SceneOptions, ShapeKind, ShapeSpec};

pub fn sl3d(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sl3d")).args(args).output().expect("binary runs")
}

pub fn ok(args: &[&str]) -> String {
    let out = sl3d(args);
    assert!(
        out.status.success(),
        "sl3d {args:?} failed ({:?}):\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Three separated shapes on a floor.
pub fn scene(seed: u64) -> Scene {
    let at = |kind, points, x: f64| ShapeSpec { pose: Pose::at([x, 0.0, 0.0]), ..ShapeSpec::canonical(kind, points) };
    let specs = [at(ShapeKind::Box, 600, 0.0), at(ShapeKind::Sphere, 500, 3.0), at(ShapeKind::Box, 600, 6.0)];
    let options = SceneOptions { floor: Some(FloorSpec::default()), require_disjoint: true };
    gen_scene(&specs, &options, seed).unwrap()
}

/// Writes `scene-<seed>.xyz` per seed plus a matching ground-truth JSONL
/// file in `gt_dir`.
pub fn write_scenes(dir: &Path, gt_dir: &Path, seeds: &[u64]) -> Vec<Scene> {
    std::fs::create_dir_all(dir).unwrap();
    std::fs::create_dir_all(gt_dir).unwrap();
    seeds
        .iter()
        .map(|&s| {
            let sc = scene(s);
            save_cloud(&sc.cloud, &dir.join(format!("{}.xyz", sc.cloud.id())), CloudFormat::Xyz).unwrap();
            let gt: Vec<_> = sc
                .objects
                .iter()
                .map(|o| DetectionRecord::new(sc.cloud.id(), o.bbox, o.class, 1.0).unwrap().to_record())
                .collect();
            std::fs::write(gt_dir.join(format!("{}.jsonl", sc.cloud.id())), records_to_jsonl(&gt)).unwrap();
            sc
        })
        .collect()
}

/// One labeled `.xyz` file per object, named so that sorting keeps set order.
pub fn write_objects(dir: &Path, kinds: Vec<ShapeKind>, per_class: usize, points: usize, seed: u64) -> Vec<u32> {
    std::fs::create_dir_all(dir).unwrap();
    let mut spec = ObjectSetSpec::new(kinds, per_class);
    spec.points = points;
    gen_object_set(&spec, seed)
        .unwrap()
        .into_iter()
        .enumerate()
        .map(|(i, (cloud, class))| {
            let n = cloud.len();
            let labeled: PointCloud = cloud.with_labels(vec![class; n]).unwrap();
            save_cloud(&labeled, &dir.join(format!("obj{i:04}.xyz")), CloudFormat::Xyz).unwrap();
            class
        })
        .collect()
}

/// Every file under `dir`, relative path and bytes, sorted.
pub fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((path.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}
