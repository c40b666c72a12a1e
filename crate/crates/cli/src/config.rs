//! Flat `key = value` pipeline configuration.

use std::fmt::Write as _;
use std::path::PathBuf;

use sha2::{Digest, Sha256};
use sl3d_core::gss::GssParams;
use sl3d_core::trainloop::TrainConfig;

use crate::Failure;

/// Inputs and outputs; unset paths are `None`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Paths {
    pub scenes: Option<PathBuf>,
    pub objects: Option<PathBuf>,
    pub proposals: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub gt: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub alignment: Option<PathBuf>,
    pub train_objects: Option<PathBuf>,
    pub test_objects: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

const PATH_KEYS: [&str; 11] = [
    "scenes",
    "objects",
    "proposals",
    "labels",
    "gt",
    "predictions",
    "checkpoint",
    "alignment",
    "train_objects",
    "test_objects",
    "out",
];

impl Paths {
    fn slot(&mut self, key: &str) -> Option<&mut Option<PathBuf>> {
        Some(match key {
            "scenes" => &mut self.scenes,
            "objects" => &mut self.objects,
            "proposals" => &mut self.proposals,
            "labels" => &mut self.labels,
            "gt" => &mut self.gt,
            "predictions" => &mut self.predictions,
            "checkpoint" => &mut self.checkpoint,
            "alignment" => &mut self.alignment,
            "train_objects" => &mut self.train_objects,
            "test_objects" => &mut self.test_objects,
            "out" => &mut self.out,
            _ => return None,
        })
    }

    fn get(&self, key: &str) -> Option<&PathBuf> {
        match key {
            "scenes" => self.scenes.as_ref(),
            "objects" => self.objects.as_ref(),
            "proposals" => self.proposals.as_ref(),
            "labels" => self.labels.as_ref(),
            "gt" => self.gt.as_ref(),
            "predictions" => self.predictions.as_ref(),
            "checkpoint" => self.checkpoint.as_ref(),
            "alignment" => self.alignment.as_ref(),
            "train_objects" => self.train_objects.as_ref(),
            "test_objects" => self.test_objects.as_ref(),
            "out" => self.out.as_ref(),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub train: TrainConfig,
    pub gss: GssParams,
    /// Points per object fed to the encoder.
    pub sample_points: usize,
    pub task: String,
    pub iou_threshold: f64,
    pub knn_k: Vec<usize>,
    /// 0 means "infer from the data".
    pub num_classes: usize,
    pub finetune_epochs: usize,
    pub paths: Paths,
    pub jobs: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            gss: GssParams::default(),
            sample_points: 1024,
            task: "purity".into(),
            iou_threshold: 0.25,
            knn_k: vec![20, 100],
            num_classes: 0,
            finetune_epochs: 100,
            paths: Paths::default(),
            jobs: 1,
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
    value.parse().map_err(|_| format!("{key}: cannot parse '{value}'"))
}

impl PipelineConfig {
    /// Apply one setting. Unknown keys are errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let value = value.trim();
        if self.train.set(key, value)? {
            return Ok(());
        }
        if let Some(slot) = self.paths.slot(key) {
            *slot = (!value.is_empty()).then(|| PathBuf::from(value));
            return Ok(());
        }
        match key {
            "gss_k" => self.gss.k = num(key, value)?,
            "max_angle_deg" => self.gss.max_angle_deg = num(key, value)?,
            "min_region_size" => self.gss.min_region_size = num(key, value)?,
            "max_plane_dist" => {
                self.gss.max_plane_dist = if value == "auto" { None } else { Some(num(key, value)?) }
            }
            "jitter_sigma" => self.gss.jitter_sigma = num(key, value)?,
            "max_proposals" => self.gss.max_proposals = num(key, value)?,
            "nms_iou" => self.gss.nms_iou = num(key, value)?,
            "max_proposal_points" => self.gss.max_proposal_points = num(key, value)?,
            "sample_points" => self.sample_points = num(key, value)?,
            "task" => {
                if !["cls", "det", "seg", "knn", "purity"].contains(&value) {
                    return Err(format!("task: expected cls|det|seg|knn|purity, got '{value}'"));
                }
                self.task = value.to_string();
            }
            "iou_threshold" => self.iou_threshold = num(key, value)?,
            "knn_k" => {
                self.knn_k = value
                    .split(',')
                    .map(|v| num(key, v.trim()))
                    .collect::<Result<_, _>>()?
            }
            "num_classes" => self.num_classes = num(key, value)?,
            "finetune_epochs" => self.finetune_epochs = num(key, value)?,
            "jobs" => self.jobs = num(key, value)?,
            _ => return Err(format!("unknown config key '{key}'")),
        }
        Ok(())
    }

    /// Parse `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, source: &str) -> Result<(), String> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("{source}:{}: expected 'key = value'", i + 1))?;
            self.set(key.trim(), value).map_err(|e| format!("{source}:{}: {e}", i + 1))?;
        }
        Ok(())
    }

    /// `--key value` pairs; `--key=value` also works.
    pub fn apply_overrides(&mut self, args: &[String]) -> Result<(), String> {
        let mut it = args.iter();
        while let Some(arg) = it.next() {
            let flag = arg.strip_prefix("--").ok_or_else(|| format!("expected --key, got '{arg}'"))?;
            let (key, value) = match flag.split_once('=') {
                Some((k, v)) => (k.to_string(), v.to_string()),
                None => {
                    let v = it.next().ok_or_else(|| format!("--{flag} needs a value"))?;
                    (flag.to_string(), v.clone())
                }
            };
            self.set(&key.replace('-', "_"), &value)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), String> {
        self.train.validate().map_err(|e| e.to_string())?;
        self.gss.validate().map_err(|e| e.to_string())?;
        if self.sample_points == 0 || self.jobs == 0 {
            return Err("sample_points and jobs must be positive".into());
        }
        if !(self.iou_threshold > 0.0 && self.iou_threshold <= 1.0) {
            return Err("iou_threshold must be in (0, 1]".into());
        }
        if self.knn_k.contains(&0) {
            return Err("knn_k entries must be positive".into());
        }
        Ok(())
    }

    /// Every key with its resolved value; feeding this back reproduces the
    /// configuration exactly. `jobs` is left out because it never changes
    /// results.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# resolved configuration\n");
        for (k, v) in self.train.to_kv() {
            writeln!(out, "{k} = {v}").unwrap();
        }
        let g = &self.gss;
        let plane = g.max_plane_dist.map_or("auto".to_string(), |d| format!("{d:?}"));
        for (k, v) in [
            ("gss_k", g.k.to_string()),
            ("max_angle_deg", format!("{:?}", g.max_angle_deg)),
            ("min_region_size", g.min_region_size.to_string()),
            ("max_plane_dist", plane),
            ("jitter_sigma", format!("{:?}", g.jitter_sigma)),
            ("max_proposals", g.max_proposals.to_string()),
            ("nms_iou", format!("{:?}", g.nms_iou)),
            ("max_proposal_points", g.max_proposal_points.to_string()),
            ("sample_points", self.sample_points.to_string()),
            ("task", self.task.clone()),
            ("iou_threshold", format!("{:?}", self.iou_threshold)),
            ("knn_k", self.knn_k.iter().map(usize::to_string).collect::<Vec<_>>().join(",")),
            ("num_classes", self.num_classes.to_string()),
            ("finetune_epochs", self.finetune_epochs.to_string()),
        ] {
            writeln!(out, "{k} = {v}").unwrap();
        }
        for key in PATH_KEYS {
            let v = self.paths.get(key).map_or(String::new(), |p| p.display().to_string());
            writeln!(out, "{key} = {v}").unwrap();
        }
        out
    }

    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }

    pub fn require(&self, key: &str) -> Result<&PathBuf, Failure> {
        self.paths.get(key).ok_or_else(|| Failure::usage(format!("missing required path '{key}'")))
    }

    pub fn optional(&self, key: &str) -> Option<&PathBuf> {
        self.paths.get(key)
    }
}

/// Defaults, then the config file, then command-line overrides.
pub fn resolve(file: Option<&std::path::Path>, overrides: &[String], jobs: Option<usize>) -> Result<PipelineConfig, Failure> {
    let mut config = PipelineConfig::default();
    if let Some(path) = file {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
        config.apply_text(&text, &path.display().to_string()).map_err(Failure::usage)?;
    }
    config.apply_overrides(overrides).map_err(Failure::usage)?;
    if let Some(j) = jobs {
        config.jobs = j;
    }
    config.validate().map_err(Failure::usage)?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_echo_training_recipe() {
        let text = PipelineConfig::default().to_text();
        assert!(text.contains("lambda = 25.0\n"));
        assert!(text.contains("sk_iterations = 100\n"));
        assert!(text.contains("k = 18\n"));
        assert!(text.contains("nms_iou = 0.75\n"));
    }

    #[test]
    fn file_then_overrides() {
        let mut c = PipelineConfig::default();
        c.apply_text("# comment\nepochs = 5  # trailing\n\nk=4\nout = /tmp/x\n", "f").unwrap();
        c.apply_overrides(&["--epochs".into(), "7".into(), "--max-plane-dist=0.02".into()]).unwrap();
        assert_eq!(c.train.epochs, 7);
        assert_eq!(c.train.k, 4);
        assert_eq!(c.gss.max_plane_dist, Some(0.02));
        assert_eq!(c.paths.out, Some(PathBuf::from("/tmp/x")));
    }

    #[test]
    fn unknown_keys_and_bad_values() {
        let mut c = PipelineConfig::default();
        assert!(c.apply_text("epoch = 3\n", "f").unwrap_err().contains("unknown config key 'epoch'"));
        assert!(c.apply_text("lr = fast\n", "f").is_err());
        assert!(c.apply_text("just words\n", "f").is_err());
        assert!(c.apply_overrides(&["--epochs".into()]).is_err());
        assert!(c.set("task", "dance").is_err());
    }

    #[test]
    fn resolved_text_round_trips() {
        let mut c = PipelineConfig::default();
        c.set("lr", "0.3").unwrap();
        c.set("knn_k", "5,7").unwrap();
        c.set("max_plane_dist", "0.125").unwrap();
        c.set("scenes", "data/scenes").unwrap();
        c.set("head_hidden", "16").unwrap();
        let mut back = PipelineConfig::default();
        back.apply_text(&c.to_text(), "resolved").unwrap();
        assert_eq!(back, c);
        assert_eq!(back.digest(), c.digest());
        back.set("seed", "9").unwrap();
        assert_ne!(back.digest(), c.digest());
    }
}
