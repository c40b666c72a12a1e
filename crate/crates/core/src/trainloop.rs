//! Alternating self-labeling: cluster the current predictions into a
//! balanced assignment `Q`, train the encoder against `Q`, repeat. Also
//! supervised finetuning from pretrained or random weights.

use std::fmt::Write as _;
use std::path::Path;

use std::f64::consts::PI;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::encoder::{
    init_params, layer_tensors, load_layers, read_tensor_file, sgd_step, write_tensor_file, EncoderError,
    EncoderModel, EncoderSpec, GradientBundle, MomentumState, Tensor, DEFAULT_POINT_WIDTHS,
};
use crate::eval::mean_purity;
use crate::pointset::{derive_seed, seeded_rng, ObjectSample};
use crate::selflabel::{
    argmax, assemble_p, degeneracy_report, extract_labels, sinkhorn_assign, LabelSet, SelfLabelError,
    SoftAssignment, DEFAULT_LAMBDA, DEFAULT_SK_ITERATIONS,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("dataset has {found} samples, need at least {needed}")]
    DatasetTooSmall { needed: usize, found: usize },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("sample {index} has label {label}, expected < {classes}")]
    LabelOutOfRange { index: usize, label: u32, classes: usize },
    #[error("state: {0}")]
    State(String),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    SelfLabel(#[from] SelfLabelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, TrainError>;

/// How pseudo labels are derived from the predictions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Labeling {
    /// Balanced transport with Sinkhorn-Knopp.
    Equipartition,
    /// Hard argmax of each prediction, no balancing. The degenerate baseline.
    NaiveArgmax,
}

impl Labeling {
    pub fn as_str(self) -> &'static str {
        match self {
            Labeling::Equipartition => "equipartition",
            Labeling::NaiveArgmax => "argmax",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "equipartition" => Some(Labeling::Equipartition),
            "argmax" => Some(Labeling::NaiveArgmax),
            _ => None,
        }
    }
}

/// Random rotation applied to each training sample, drawn anew every
/// epoch. Relabeling and evaluation always see the unrotated samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Augment {
    None,
    /// Uniform heading about +z.
    Yaw,
    /// Uniform over all rotations.
    Full,
}

impl Augment {
    pub fn as_str(self) -> &'static str {
        match self {
            Augment::None => "none",
            Augment::Yaw => "yaw",
            Augment::Full => "full",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(Augment::None),
            "yaw" => Some(Augment::Yaw),
            "full" => Some(Augment::Full),
            _ => None,
        }
    }

    fn apply(self, sample: &ObjectSample, seed: u64) -> ObjectSample {
        let mut rng = seeded_rng(seed);
        let rotation = match self {
            Augment::None => return sample.clone(),
            Augment::Yaw => UnitQuaternion::from_axis_angle(&Vector3::z_axis(), rng.random_range(-PI..PI)),
            Augment::Full => {
                let q: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
                UnitQuaternion::from_quaternion(Quaternion::new(q[0], q[1], q[2], q[3]))
            }
        };
        let points = sample
            .points
            .iter()
            .map(|p| {
                let v = rotation * Vector3::from(*p);
                [v[0], v[1], v[2]]
            })
            .collect();
        ObjectSample { points, ..sample.clone() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_decay_factor: f64,
    pub lr_decay_every: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub k: usize,
    pub lambda: f64,
    pub sk_iterations: usize,
    pub relabel_every: usize,
    pub labeling: Labeling,
    pub augment: Augment,
    pub point_widths: Vec<usize>,
    pub head_hidden: Vec<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 600,
            batch_size: 32,
            lr: 0.001,
            lr_decay_factor: 10.0,
            lr_decay_every: 200,
            momentum: 0.9,
            weight_decay: 1e-4,
            k: 18,
            lambda: DEFAULT_LAMBDA,
            sk_iterations: DEFAULT_SK_ITERATIONS,
            relabel_every: 10,
            labeling: Labeling::Equipartition,
            augment: Augment::None,
            point_widths: DEFAULT_POINT_WIDTHS.to_vec(),
            head_hidden: Vec::new(),
            seed: 0,
        }
    }
}

fn join_usize(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

fn parse_usize_list(value: &str) -> std::result::Result<Vec<usize>, String> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(|w| w.trim().parse().map_err(|_| format!("bad integer '{w}'")))
        .collect()
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        if self.batch_size == 0 || self.lr_decay_every == 0 || self.relabel_every == 0 || self.sk_iterations == 0 {
            return bad("batch_size, lr_decay_every, relabel_every and sk_iterations must be positive".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor.is_finite()) {
            return bad(format!("lr_decay_factor must be positive, got {}", self.lr_decay_factor));
        }
        if !(0.0..1.0).contains(&self.momentum) || !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("momentum must be in [0, 1) and weight_decay >= 0".into());
        }
        if self.k < 2 {
            return bad(format!("K must be at least 2, got {}", self.k));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be positive, got {}", self.lambda));
        }
        self.encoder_spec(self.k).validate()?;
        Ok(())
    }

    /// `lr0 / factor^floor(epoch / every)`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr / self.lr_decay_factor.powi((epoch / self.lr_decay_every) as i32)
    }

    pub fn encoder_spec(&self, classes: usize) -> EncoderSpec {
        EncoderSpec::new(self.point_widths.clone(), &self.head_hidden, classes)
    }

    pub const KEYS: [&'static str; 16] = [
        "epochs",
        "batch_size",
        "lr",
        "lr_decay_factor",
        "lr_decay_every",
        "momentum",
        "weight_decay",
        "k",
        "lambda",
        "sk_iterations",
        "relabel_every",
        "labeling",
        "augment",
        "point_widths",
        "head_hidden",
        "seed",
    ];

    /// Set one field from its text form. `Ok(false)` means the key is not a
    /// training key.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<bool, String> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
            value.trim().parse().map_err(|_| format!("{key}: cannot parse '{value}'"))
        }
        match key {
            "epochs" => self.epochs = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "lr" => self.lr = num(key, value)?,
            "lr_decay_factor" => self.lr_decay_factor = num(key, value)?,
            "lr_decay_every" => self.lr_decay_every = num(key, value)?,
            "momentum" => self.momentum = num(key, value)?,
            "weight_decay" => self.weight_decay = num(key, value)?,
            "k" => self.k = num(key, value)?,
            "lambda" => self.lambda = num(key, value)?,
            "sk_iterations" => self.sk_iterations = num(key, value)?,
            "relabel_every" => self.relabel_every = num(key, value)?,
            "labeling" => {
                self.labeling = Labeling::parse(value.trim())
                    .ok_or_else(|| format!("labeling: expected 'equipartition' or 'argmax', got '{value}'"))?
            }
            "augment" => {
                self.augment = Augment::parse(value.trim())
                    .ok_or_else(|| format!("augment: expected 'none', 'yaw' or 'full', got '{value}'"))?
            }
            "point_widths" => self.point_widths = parse_usize_list(value).map_err(|e| format!("{key}: {e}"))?,
            "head_hidden" => self.head_hidden = parse_usize_list(value).map_err(|e| format!("{key}: {e}"))?,
            "seed" => self.seed = num(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Every field in [`Self::KEYS`] order; floats use the shortest exact form.
    pub fn to_kv(&self) -> Vec<(&'static str, String)> {
        vec![
            ("epochs", self.epochs.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("lr", format!("{:?}", self.lr)),
            ("lr_decay_factor", format!("{:?}", self.lr_decay_factor)),
            ("lr_decay_every", self.lr_decay_every.to_string()),
            ("momentum", format!("{:?}", self.momentum)),
            ("weight_decay", format!("{:?}", self.weight_decay)),
            ("k", self.k.to_string()),
            ("lambda", format!("{:?}", self.lambda)),
            ("sk_iterations", self.sk_iterations.to_string()),
            ("relabel_every", self.relabel_every.to_string()),
            ("labeling", self.labeling.as_str().to_string()),
            ("augment", self.augment.as_str().to_string()),
            ("point_widths", join_usize(&self.point_widths)),
            ("head_hidden", join_usize(&self.head_hidden)),
            ("seed", self.seed.to_string()),
        ]
    }
}

/// One line of the metrics log.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub mean_loss: f64,
    pub lr: f64,
    pub label_entropy: f64,
    pub purity: Option<f64>,
}

/// Dataset-mean cross-entropy of the same predictions against the old and
/// the new targets, measured at a relabel.
#[derive(Debug, Clone, PartialEq)]
pub struct RelabelEvent {
    pub epoch: usize,
    pub loss_before: f64,
    pub loss_after: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub model: EncoderModel,
    pub momentum: MomentumState,
    pub q: SoftAssignment,
    pub labels: LabelSet,
    /// Number of completed epochs.
    pub epoch: usize,
    pub metrics: Vec<EpochMetrics>,
    pub relabels: Vec<RelabelEvent>,
}

impl TrainState {
    pub fn loss_history(&self) -> Vec<f64> {
        self.metrics.iter().map(|m| m.mean_loss).collect()
    }
}

fn sample_ids(dataset: &[ObjectSample]) -> Vec<String> {
    dataset.iter().map(|s| s.source_id.clone()).collect()
}

fn all_logits(model: &EncoderModel, dataset: &[ObjectSample]) -> Result<Vec<Vec<f64>>> {
    dataset.iter().map(|s| Ok(model.forward(s)?.1)).collect()
}

fn cross_entropy(logits: &[f64], target: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    target.iter().zip(logits).filter(|(&t, _)| t != 0.0).map(|(t, z)| -t * (z - lse)).sum()
}

fn mean_loss_against(logits: &[Vec<f64>], q: &SoftAssignment) -> f64 {
    let total: f64 = logits.iter().enumerate().map(|(j, z)| cross_entropy(z, &q.target(j))).sum();
    total / logits.len() as f64
}

/// Pseudo labels for the given predictions under `config.labeling`.
pub fn assign(logits: &[Vec<f64>], config: &TrainConfig) -> Result<SoftAssignment> {
    let p = assemble_p(logits)?;
    match config.labeling {
        Labeling::Equipartition => Ok(sinkhorn_assign(&p, config.lambda, config.sk_iterations)?),
        Labeling::NaiveArgmax => {
            let (k, n) = (p.classes(), p.samples());
            let mut values = vec![0.0; k * n];
            for j in 0..n {
                let column: Vec<f64> = (0..k).map(|i| p.get(i, j)).collect();
                values[argmax(&column) * n + j] = 1.0 / n as f64;
            }
            Ok(SoftAssignment::from_values(k, n, values)?)
        }
    }
}

/// Forward every sample in order, rebuild `Q` and the hard labels.
pub fn relabel(state: &mut TrainState, dataset: &[ObjectSample], config: &TrainConfig) -> Result<()> {
    let logits = all_logits(&state.model, dataset)?;
    relabel_from_logits(state, &logits, dataset, config)
}

fn relabel_from_logits(
    state: &mut TrainState,
    logits: &[Vec<f64>],
    dataset: &[ObjectSample],
    config: &TrainConfig,
) -> Result<()> {
    state.q = assign(logits, config)?;
    state.labels = extract_labels(&state.q, sample_ids(dataset))?;
    Ok(())
}

/// Fresh model at `config.seed` and its epoch-0 labels.
pub fn init_state(dataset: &[ObjectSample], config: &TrainConfig) -> Result<TrainState> {
    config.validate()?;
    if dataset.len() < config.k {
        return Err(TrainError::DatasetTooSmall { needed: config.k, found: dataset.len() });
    }
    let model = init_params(&config.encoder_spec(config.k), config.seed)?;
    let momentum = MomentumState::zeros_like(&model);
    let logits = all_logits(&model, dataset)?;
    let q = assign(&logits, config)?;
    let labels = extract_labels(&q, sample_ids(dataset))?;
    Ok(TrainState { model, momentum, q, labels, epoch: 0, metrics: Vec::new(), relabels: Vec::new() })
}

/// One pass over `order` in mini-batches; returns the mean per-sample loss.
fn run_epoch(
    model: &mut EncoderModel,
    momentum: &mut MomentumState,
    dataset: &[ObjectSample],
    epoch: usize,
    target: impl Fn(usize) -> Vec<f64>,
    config: &TrainConfig,
) -> Result<f64> {
    let epoch_seed = derive_seed(config.seed, epoch as u64);
    let order = epoch_order(dataset.len(), epoch_seed);
    let lr = config.lr_at(epoch);
    let mut total = 0.0;
    for batch in order.chunks(config.batch_size) {
        let mut grads = GradientBundle::zeros_like(model);
        for &j in batch {
            let (loss, g) = if config.augment == Augment::None {
                model.backward(&dataset[j], &target(j))?
            } else {
                let sample = config.augment.apply(&dataset[j], derive_seed(epoch_seed, j as u64));
                model.backward(&sample, &target(j))?
            };
            total += loss;
            grads.add_assign(&g);
        }
        grads.scale(1.0 / batch.len() as f64);
        sgd_step(model, &grads, lr, config.momentum, config.weight_decay, momentum)?;
    }
    Ok(total / order.len() as f64)
}

fn epoch_order(n: usize, epoch_seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeded_rng(epoch_seed));
    order
}

/// Continue `state` up to `config.epochs`, recomputing `Q` every
/// `relabel_every` epochs. `gt`, when given, adds a purity column to the
/// metrics. A state returned from here can be saved and resumed without
/// changing the trajectory.
pub fn resume_selflabel(
    mut state: TrainState,
    dataset: &[ObjectSample],
    config: &TrainConfig,
    gt: Option<&[u32]>,
) -> Result<TrainState> {
    config.validate()?;
    if state.q.samples() != dataset.len() {
        return Err(TrainError::State(format!(
            "state covers {} samples, dataset has {}",
            state.q.samples(),
            dataset.len()
        )));
    }
    while state.epoch < config.epochs {
        let epoch = state.epoch;
        if epoch > 0 && epoch.is_multiple_of(config.relabel_every) {
            relabel_with_event(&mut state, dataset, config)?;
        }
        let lr = config.lr_at(epoch);
        let q = state.q.clone();
        let mean_loss = run_epoch(&mut state.model, &mut state.momentum, dataset, epoch, |j| q.target(j), config)?;
        if !mean_loss.is_finite() {
            return Err(TrainError::Encoder(EncoderError::NonFiniteGradient));
        }
        let (label_entropy, _) = degeneracy_report(&state.labels, config.k);
        let purity = match gt {
            Some(gt) => Some(mean_purity(&state.labels, gt).map_err(|e| TrainError::State(e.to_string()))?),
            None => None,
        };
        log::debug!("epoch {epoch}: loss {mean_loss:.5} entropy {label_entropy:.4}");
        state.metrics.push(EpochMetrics { epoch, mean_loss, lr, label_entropy, purity });
        state.epoch += 1;
    }
    Ok(state)
}

/// Relabel once more after the last epoch so the labels reflect the final
/// weights. A run with no epochs keeps its initial labels.
pub fn finish_selflabel(mut state: TrainState, dataset: &[ObjectSample], config: &TrainConfig) -> Result<TrainState> {
    if state.epoch > 0 {
        relabel_with_event(&mut state, dataset, config)?;
    }
    Ok(state)
}

fn relabel_with_event(state: &mut TrainState, dataset: &[ObjectSample], config: &TrainConfig) -> Result<()> {
    let logits = all_logits(&state.model, dataset)?;
    let loss_before = mean_loss_against(&logits, &state.q);
    relabel_from_logits(state, &logits, dataset, config)?;
    let loss_after = mean_loss_against(&logits, &state.q);
    state.relabels.push(RelabelEvent { epoch: state.epoch, loss_before, loss_after });
    Ok(())
}

/// Full self-labeling run from a fresh initialization.
pub fn train_selflabel(dataset: &[ObjectSample], config: &TrainConfig, gt: Option<&[u32]>) -> Result<TrainState> {
    let state = init_state(dataset, config)?;
    let state = resume_selflabel(state, dataset, config, gt)?;
    finish_selflabel(state, dataset, config)
}

/// CSV `epoch,mean_loss,lr,label_entropy[,purity]`.
pub fn metrics_csv(metrics: &[EpochMetrics]) -> String {
    let with_purity = metrics.iter().any(|m| m.purity.is_some());
    let mut out = String::from("epoch,mean_loss,lr,label_entropy");
    out.push_str(if with_purity { ",purity\n" } else { "\n" });
    for m in metrics {
        write!(out, "{},{:?},{:?},{:?}", m.epoch, m.mean_loss, m.lr, m.label_entropy).unwrap();
        if with_purity {
            match m.purity {
                Some(p) => write!(out, ",{p:?}").unwrap(),
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}

/// Sidecar next to a state checkpoint: the config, progress and metrics.
fn state_meta(state: &TrainState, config: &TrainConfig) -> String {
    let mut out = String::from("# training state\n");
    for (k, v) in config.to_kv() {
        writeln!(out, "{k} = {v}").unwrap();
    }
    writeln!(out, "epoch = {}", state.epoch).unwrap();
    for m in &state.metrics {
        let purity = m.purity.map_or("-".to_string(), |p| format!("{p:?}"));
        writeln!(out, "metric {} {:?} {:?} {:?} {purity}", m.epoch, m.mean_loss, m.lr, m.label_entropy).unwrap();
    }
    for r in &state.relabels {
        writeln!(out, "relabel {} {:?} {:?}", r.epoch, r.loss_before, r.loss_after).unwrap();
    }
    out
}

fn meta_path(path: &Path) -> std::path::PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".meta");
    p.into()
}

/// Write model, momentum buffers and `Q` to `path` and the sidecar to
/// `<path>.meta`.
pub fn save_state(state: &TrainState, config: &TrainConfig, path: &Path) -> Result<()> {
    let mut file = state.model.to_tensor_file();
    file.tensors.extend(layer_tensors("momentum.point", &state.momentum.0.point_layers));
    file.tensors.extend(layer_tensors("momentum.head", &state.momentum.0.head_layers));
    file.tensors.push(Tensor::new("q", state.q.classes(), state.q.samples(), state.q.values().to_vec()));
    write_tensor_file(path, &file)?;
    std::fs::write(meta_path(path), state_meta(state, config))?;
    Ok(())
}

/// Inverse of [`save_state`]. Sample ids come from `dataset`.
pub fn load_state(path: &Path, dataset: &[ObjectSample]) -> Result<(TrainState, TrainConfig)> {
    let file = read_tensor_file(path)?;
    let model = EncoderModel::from_tensor_file(&file)?;
    let mut momentum = MomentumState::zeros_like(&model);
    load_layers(&file, "momentum.point", &mut momentum.0.point_layers)?;
    load_layers(&file, "momentum.head", &mut momentum.0.head_layers)?;
    let q = file.get("q").ok_or_else(|| TrainError::State("checkpoint has no q tensor".into()))?;
    let q = SoftAssignment::from_values(q.rows, q.cols, q.values.clone())?;
    if q.samples() != dataset.len() {
        return Err(TrainError::State(format!("q has {} columns, dataset {}", q.samples(), dataset.len())));
    }
    let labels = extract_labels(&q, sample_ids(dataset))?;

    let meta = std::fs::read_to_string(meta_path(path))?;
    let mut config = TrainConfig::default();
    let mut epoch = None;
    let mut metrics = Vec::new();
    let mut relabels = Vec::new();
    let bad = |line: &str| TrainError::State(format!("bad state line '{line}'"));
    for line in meta.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.as_slice() {
            ["metric", e, loss, lr, ent, purity] => {
                let f = |s: &str| s.parse::<f64>().map_err(|_| bad(line));
                metrics.push(EpochMetrics {
                    epoch: e.parse().map_err(|_| bad(line))?,
                    mean_loss: f(loss)?,
                    lr: f(lr)?,
                    label_entropy: f(ent)?,
                    purity: if *purity == "-" { None } else { Some(f(purity)?) },
                });
            }
            ["relabel", e, before, after] => relabels.push(RelabelEvent {
                epoch: e.parse().map_err(|_| bad(line))?,
                loss_before: before.parse().map_err(|_| bad(line))?,
                loss_after: after.parse().map_err(|_| bad(line))?,
            }),
            _ => {
                let (k, v) = line.split_once('=').ok_or_else(|| bad(line))?;
                let (k, v) = (k.trim(), v.trim());
                if k == "epoch" {
                    epoch = Some(v.parse().map_err(|_| bad(line))?);
                } else if !config.set(k, v).map_err(TrainError::State)? {
                    return Err(bad(line));
                }
            }
        }
    }
    let epoch = epoch.ok_or_else(|| TrainError::State("state has no epoch".into()))?;
    Ok((TrainState { model, momentum, q, labels, epoch, metrics, relabels }, config))
}

/// Fraction (in percent) of samples whose argmax logit equals the label.
pub fn accuracy(model: &EncoderModel, data: &[(ObjectSample, u32)]) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0;
    for (s, label) in data {
        if argmax(&model.forward(s)?.1) == *label as usize {
            hits += 1;
        }
    }
    Ok(100.0 * hits as f64 / data.len() as f64)
}

/// Supervised training with one-hot targets on a fresh `num_classes` head.
///
/// With `pretrained`, its per-point layers are kept and only the head is
/// replaced; without it every layer starts from `config.seed`. Returns the
/// model and its top-1 test accuracy in percent.
pub fn finetune(
    pretrained: Option<&EncoderModel>,
    train: &[(ObjectSample, u32)],
    test: &[(ObjectSample, u32)],
    config: &TrainConfig,
    num_classes: usize,
) -> Result<(EncoderModel, f64)> {
    if num_classes < 2 {
        return Err(TrainError::InvalidConfig(format!("num_classes must be at least 2, got {num_classes}")));
    }
    if train.is_empty() {
        return Err(TrainError::DatasetTooSmall { needed: 1, found: 0 });
    }
    for (index, (_, label)) in train.iter().chain(test).enumerate() {
        if *label as usize >= num_classes {
            return Err(TrainError::LabelOutOfRange { index, label: *label, classes: num_classes });
        }
    }
    let mut model = match pretrained {
        Some(m) => {
            let mut m = m.clone();
            m.replace_head(&config.head_hidden, num_classes, derive_seed(config.seed, 1));
            m
        }
        None => init_params(&config.encoder_spec(num_classes), config.seed)?,
    };
    let samples: Vec<ObjectSample> = train.iter().map(|(s, _)| s.clone()).collect();
    let onehot = |j: usize| {
        let mut t = vec![0.0; num_classes];
        t[train[j].1 as usize] = 1.0;
        t
    };
    let mut momentum = MomentumState::zeros_like(&model);
    for epoch in 0..config.epochs {
        run_epoch(&mut model, &mut momentum, &samples, epoch, onehot, config)?;
    }
    let acc = accuracy(&model, test)?;
    Ok((model, acc))
}
