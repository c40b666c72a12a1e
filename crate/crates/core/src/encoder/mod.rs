//! Permutation-invariant point-set encoder with a classifier head.
//!
//! Every point goes through the same stack of affine + ReLU layers, the
//! per-point features are max-pooled into one embedding, and a small stack
//! of affine layers maps the embedding to K logits. Gradients are computed
//! by hand; the max pool routes each channel's gradient to the point that
//! won it (lowest index on ties).

mod checkpoint;

use rand::Rng;
use rand_distr::Uniform;
use thiserror::Error;

use crate::pointset::{seeded_rng, ObjectSample};

pub use checkpoint::{read_tensor_file, write_tensor_file, Tensor, TensorFile};

pub const DEFAULT_POINT_WIDTHS: [usize; 4] = [3, 64, 128, 1024];

#[derive(Debug, Error, PartialEq)]
pub enum EncoderError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid target distribution: {0}")]
    InvalidTarget(String),
    #[error("gradient contains non-finite values")]
    NonFiniteGradient,
    #[error("invalid layer widths: {0}")]
    InvalidWidths(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

pub type Result<T> = std::result::Result<T, EncoderError>;

/// Affine layer `y = x W + b`, with `weight` stored inputs-major
/// (`weight[i * outputs + o]`).
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { inputs, outputs, weight: vec![0.0; inputs * outputs], bias: vec![0.0; outputs] }
    }

    /// Glorot-uniform weights, zero bias.
    fn init(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let a = (6.0 / (inputs + outputs) as f64).sqrt();
        let dist = Uniform::new_inclusive(-a, a).expect("finite bound");
        let weight = (0..inputs * outputs).map(|_| rng.sample(dist)).collect();
        Self { inputs, outputs, weight, bias: vec![0.0; outputs] }
    }

    fn zeros_like(&self) -> Self {
        Self::zeros(self.inputs, self.outputs)
    }

    /// Rows of `input` (each `inputs` wide) → rows of the output.
    fn forward_rows(&self, input: &[f64], relu: bool) -> Vec<f64> {
        let rows = input.len() / self.inputs;
        let mut out = Vec::with_capacity(rows * self.outputs);
        for x in input.chunks_exact(self.inputs) {
            let start = out.len();
            out.extend_from_slice(&self.bias);
            let acc = &mut out[start..];
            for (k, &xk) in x.iter().enumerate() {
                if xk == 0.0 {
                    continue;
                }
                let w = &self.weight[k * self.outputs..(k + 1) * self.outputs];
                for (a, &wv) in acc.iter_mut().zip(w) {
                    *a += xk * wv;
                }
            }
            if relu {
                for a in acc.iter_mut() {
                    if *a < 0.0 {
                        *a = 0.0;
                    }
                }
            }
        }
        out
    }

    /// Accumulate parameter gradients for upstream `d_out` (rows × outputs)
    /// and return the gradient with respect to `input`. Rows of `d_out` that
    /// are entirely zero are skipped.
    fn backward_rows(&self, input: &[f64], d_out: &[f64], grad: &mut Dense, need_input: bool) -> Vec<f64> {
        let mut d_in = if need_input { vec![0.0; input.len()] } else { Vec::new() };
        for (r, (x, dz)) in input.chunks_exact(self.inputs).zip(d_out.chunks_exact(self.outputs)).enumerate() {
            if dz.iter().all(|&v| v == 0.0) {
                continue;
            }
            for (g, &d) in grad.bias.iter_mut().zip(dz) {
                *g += d;
            }
            for (k, &xk) in x.iter().enumerate() {
                let w = &self.weight[k * self.outputs..(k + 1) * self.outputs];
                let gw = &mut grad.weight[k * self.outputs..(k + 1) * self.outputs];
                let mut dot = 0.0;
                for ((g, &wv), &d) in gw.iter_mut().zip(w).zip(dz) {
                    *g += xk * d;
                    dot += wv * d;
                }
                if need_input {
                    d_in[r * self.inputs + k] = dot;
                }
            }
        }
        d_in
    }
}

/// Layer widths: `point_widths` runs from the 3 input coordinates to the
/// embedding size, `head_widths` from the embedding size to K.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncoderSpec {
    pub point_widths: Vec<usize>,
    pub head_widths: Vec<usize>,
}

impl EncoderSpec {
    /// `3 → 64 → 128 → 1024` per point, then a single linear head to `classes`.
    pub fn default_for(classes: usize) -> Self {
        Self::new(DEFAULT_POINT_WIDTHS.to_vec(), &[], classes)
    }

    /// Per-point widths plus hidden head widths; the head starts at the
    /// embedding size and ends at `classes`.
    pub fn new(point_widths: Vec<usize>, head_hidden: &[usize], classes: usize) -> Self {
        let embedding = point_widths.last().copied().unwrap_or(0);
        let mut head_widths = vec![embedding];
        head_widths.extend_from_slice(head_hidden);
        head_widths.push(classes);
        Self { point_widths, head_widths }
    }

    pub fn embedding_dim(&self) -> usize {
        self.point_widths.last().copied().unwrap_or(0)
    }

    pub fn classes(&self) -> usize {
        self.head_widths.last().copied().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.point_widths.len() < 2 || self.point_widths[0] != 3 {
            return Err(EncoderError::InvalidWidths(format!(
                "per-point widths must start at 3 and have at least one layer, got {:?}",
                self.point_widths
            )));
        }
        if self.head_widths.len() < 2 || self.head_widths[0] != self.embedding_dim() {
            return Err(EncoderError::InvalidWidths(format!(
                "head widths {:?} must start at the embedding size {}",
                self.head_widths,
                self.embedding_dim()
            )));
        }
        if self.point_widths.iter().chain(&self.head_widths).any(|&w| w == 0) {
            return Err(EncoderError::InvalidWidths("widths must be positive".into()));
        }
        Ok(())
    }

    /// Compact form used in checkpoints, e.g. `3,64,128,1024:1024,40`.
    pub fn to_token(&self) -> String {
        let join = |w: &[usize]| w.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        format!("{}:{}", join(&self.point_widths), join(&self.head_widths))
    }

    pub fn from_token(token: &str) -> Result<Self> {
        let parse = |s: &str| -> Result<Vec<usize>> {
            s.split(',')
                .map(|w| w.trim().parse().map_err(|_| EncoderError::InvalidWidths(format!("bad width '{w}'"))))
                .collect()
        };
        let (points, head) = token
            .split_once(':')
            .ok_or_else(|| EncoderError::InvalidWidths(format!("bad widths token '{token}'")))?;
        let spec = Self { point_widths: parse(points)?, head_widths: parse(head)? };
        spec.validate()?;
        Ok(spec)
    }
}

/// Parameters of the encoder `f` and head `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderModel {
    pub point_layers: Vec<Dense>,
    pub head_layers: Vec<Dense>,
    pub seed: u64,
}

/// Per-parameter partial derivatives, shaped like [`EncoderModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    pub point_layers: Vec<Dense>,
    pub head_layers: Vec<Dense>,
}

/// SGD momentum buffers, shaped like [`EncoderModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumState(pub GradientBundle);

/// Which side of every ReLU each unit landed on, plus max-pool winners.
/// Finite-difference checks compare these to stay off kinks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivationPattern {
    active: Vec<bool>,
    pool_winners: Vec<usize>,
}

struct Trace {
    /// Input coordinates followed by each per-point layer's post-ReLU output.
    point_acts: Vec<Vec<f64>>,
    pool_winners: Vec<usize>,
    /// Embedding followed by each head layer's output (post-ReLU for hidden).
    head_acts: Vec<Vec<f64>>,
}

impl Trace {
    fn embedding(&self) -> &[f64] {
        &self.head_acts[0]
    }

    fn logits(&self) -> &[f64] {
        self.head_acts.last().expect("head output")
    }
}

/// Uniform(-a, a) weights with `a = sqrt(6 / (fan_in + fan_out))`, zero
/// biases; layers are drawn in order from one seeded stream.
pub fn init_params(spec: &EncoderSpec, seed: u64) -> Result<EncoderModel> {
    spec.validate()?;
    let mut rng = seeded_rng(seed);
    let point_layers = spec
        .point_widths
        .windows(2)
        .map(|w| Dense::init(w[0], w[1], &mut rng))
        .collect();
    let head_layers = spec
        .head_widths
        .windows(2)
        .map(|w| Dense::init(w[0], w[1], &mut rng))
        .collect();
    Ok(EncoderModel { point_layers, head_layers, seed })
}

impl EncoderModel {
    pub fn spec(&self) -> EncoderSpec {
        let mut point_widths = vec![self.point_layers[0].inputs];
        point_widths.extend(self.point_layers.iter().map(|l| l.outputs));
        let mut head_widths = vec![self.head_layers[0].inputs];
        head_widths.extend(self.head_layers.iter().map(|l| l.outputs));
        EncoderSpec { point_widths, head_widths }
    }

    pub fn embedding_dim(&self) -> usize {
        self.point_layers.last().map_or(0, |l| l.outputs)
    }

    pub fn classes(&self) -> usize {
        self.head_layers.last().map_or(0, |l| l.outputs)
    }

    /// Swap in a freshly initialized head ending at `classes`, keeping `f`.
    pub fn replace_head(&mut self, head_hidden: &[usize], classes: usize, seed: u64) {
        let mut widths = vec![self.embedding_dim()];
        widths.extend_from_slice(head_hidden);
        widths.push(classes);
        let mut rng = seeded_rng(seed);
        self.head_layers = widths.windows(2).map(|w| Dense::init(w[0], w[1], &mut rng)).collect();
    }

    fn all_layers(&self) -> impl Iterator<Item = &Dense> {
        self.point_layers.iter().chain(&self.head_layers)
    }

    fn all_layers_mut(&mut self) -> impl Iterator<Item = &mut Dense> {
        self.point_layers.iter_mut().chain(self.head_layers.iter_mut())
    }

    pub fn parameter_count(&self) -> usize {
        self.all_layers().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// All parameters, layer by layer (weights then bias).
    pub fn flat_params(&self) -> Vec<f64> {
        self.all_layers()
            .flat_map(|l| l.weight.iter().chain(&l.bias).copied())
            .collect()
    }

    pub fn set_flat_params(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.parameter_count() {
            return Err(EncoderError::ShapeMismatch(format!(
                "{} values for {} parameters",
                values.len(),
                self.parameter_count()
            )));
        }
        let mut it = values.iter();
        for layer in self.all_layers_mut() {
            for v in layer.weight.iter_mut().chain(layer.bias.iter_mut()) {
                *v = *it.next().expect("length checked");
            }
        }
        Ok(())
    }

    fn check_sample(&self, sample: &ObjectSample) -> Result<()> {
        if sample.points.is_empty() {
            return Err(EncoderError::ShapeMismatch("sample has no points".into()));
        }
        if self.point_layers.first().map(|l| l.inputs) != Some(3) {
            return Err(EncoderError::ShapeMismatch("first layer must take 3 coordinates".into()));
        }
        Ok(())
    }

    fn trace(&self, sample: &ObjectSample) -> Result<Trace> {
        self.check_sample(sample)?;
        let input: Vec<f64> = sample.points.iter().flat_map(|p| p.iter().copied()).collect();
        let mut point_acts = vec![input];
        for layer in &self.point_layers {
            let next = layer.forward_rows(point_acts.last().expect("input"), true);
            point_acts.push(next);
        }
        let width = self.embedding_dim();
        let last = point_acts.last().expect("features");
        let mut embedding = last[..width].to_vec();
        let mut pool_winners = vec![0usize; width];
        for (i, row) in last.chunks_exact(width).enumerate().skip(1) {
            for (c, &v) in row.iter().enumerate() {
                if v > embedding[c] {
                    embedding[c] = v;
                    pool_winners[c] = i;
                }
            }
        }
        let mut head_acts = vec![embedding];
        let hidden = self.head_layers.len() - 1;
        for (l, layer) in self.head_layers.iter().enumerate() {
            let next = layer.forward_rows(head_acts.last().expect("embedding"), l < hidden);
            head_acts.push(next);
        }
        Ok(Trace { point_acts, pool_winners, head_acts })
    }

    /// Pooled embedding and head logits.
    pub fn forward(&self, sample: &ObjectSample) -> Result<(Vec<f64>, Vec<f64>)> {
        let t = self.trace(sample)?;
        Ok((t.embedding().to_vec(), t.logits().to_vec()))
    }

    pub fn activation_pattern(&self, sample: &ObjectSample) -> Result<ActivationPattern> {
        let t = self.trace(sample)?;
        let active = t.point_acts[1..]
            .iter()
            .chain(&t.head_acts[1..t.head_acts.len() - 1])
            .flat_map(|acts| acts.iter().map(|&v| v > 0.0))
            .collect();
        Ok(ActivationPattern { active, pool_winners: t.pool_winners })
    }

    /// Cross-entropy `-sum_c t_c log softmax(logits)_c` and its exact gradient.
    pub fn backward(&self, sample: &ObjectSample, target: &[f64]) -> Result<(f64, GradientBundle)> {
        let k = self.classes();
        validate_target(target, k)?;
        let t = self.trace(sample)?;
        let logits = t.logits();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        let loss = target
            .iter()
            .zip(logits)
            .filter(|(&tc, _)| tc != 0.0)
            .map(|(tc, z)| -tc * (z - lse))
            .sum::<f64>();
        let target_mass: f64 = target.iter().sum();
        let mut delta: Vec<f64> = logits
            .iter()
            .zip(target)
            .map(|(z, tc)| (z - lse).exp() * target_mass - tc)
            .collect();

        let mut grads = GradientBundle::zeros_like(self);
        for l in (0..self.head_layers.len()).rev() {
            let layer = &self.head_layers[l];
            let input = &t.head_acts[l];
            let mut d_in = layer.backward_rows(input, &delta, &mut grads.head_layers[l], true);
            if l > 0 {
                for (d, &a) in d_in.iter_mut().zip(input) {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            delta = d_in;
        }

        let width = self.embedding_dim();
        let points = sample.points.len();
        let mut d_feat = vec![0.0; points * width];
        for (c, (&winner, &d)) in t.pool_winners.iter().zip(&delta).enumerate() {
            if t.point_acts.last().expect("features")[winner * width + c] > 0.0 {
                d_feat[winner * width + c] = d;
            }
        }
        for l in (0..self.point_layers.len()).rev() {
            let input = &t.point_acts[l];
            let need_input = l > 0;
            let mut d_in = self.point_layers[l].backward_rows(input, &d_feat, &mut grads.point_layers[l], need_input);
            if need_input {
                for (d, &a) in d_in.iter_mut().zip(input) {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            d_feat = d_in;
        }
        Ok((loss, grads))
    }

    pub fn to_tensor_file(&self) -> TensorFile {
        let spec = self.spec();
        let mut file = TensorFile {
            widths: spec.to_token(),
            classes: spec.classes(),
            seed: self.seed,
            tensors: Vec::new(),
        };
        file.tensors.extend(layer_tensors("point", &self.point_layers));
        file.tensors.extend(layer_tensors("head", &self.head_layers));
        file
    }

    pub fn from_tensor_file(file: &TensorFile) -> Result<Self> {
        let spec = EncoderSpec::from_token(&file.widths)?;
        if spec.classes() != file.classes {
            return Err(EncoderError::Checkpoint(format!(
                "header K={} disagrees with widths {}",
                file.classes, file.widths
            )));
        }
        let mut model = init_params(&spec, file.seed)?;
        load_layers(file, "point", &mut model.point_layers)?;
        load_layers(file, "head", &mut model.head_layers)?;
        Ok(model)
    }

    pub fn save(&self, path: &std::path::Path) -> std::io::Result<()> {
        write_tensor_file(path, &self.to_tensor_file())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let file = read_tensor_file(path).map_err(|e| EncoderError::Checkpoint(e.to_string()))?;
        Self::from_tensor_file(&file)
    }
}

pub(crate) fn layer_tensors(prefix: &str, layers: &[Dense]) -> Vec<Tensor> {
    layers
        .iter()
        .enumerate()
        .flat_map(|(i, l)| {
            [
                Tensor::new(format!("{prefix}.{i}.weight"), l.inputs, l.outputs, l.weight.clone()),
                Tensor::new(format!("{prefix}.{i}.bias"), 1, l.outputs, l.bias.clone()),
            ]
        })
        .collect()
}

pub(crate) fn load_layers(file: &TensorFile, prefix: &str, layers: &mut [Dense]) -> Result<()> {
    for (i, layer) in layers.iter_mut().enumerate() {
        for (suffix, rows, dst) in [
            ("weight", layer.inputs, &mut layer.weight),
            ("bias", 1, &mut layer.bias),
        ] {
            let name = format!("{prefix}.{i}.{suffix}");
            let t = file
                .get(&name)
                .ok_or_else(|| EncoderError::Checkpoint(format!("missing tensor {name}")))?;
            if t.rows != rows || t.values.len() != dst.len() {
                return Err(EncoderError::Checkpoint(format!("tensor {name} has the wrong shape")));
            }
            dst.copy_from_slice(&t.values);
        }
    }
    Ok(())
}

fn validate_target(target: &[f64], classes: usize) -> Result<()> {
    if target.len() != classes {
        return Err(EncoderError::InvalidTarget(format!("length {} for K={classes}", target.len())));
    }
    if target.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(EncoderError::InvalidTarget("entries must be finite and nonnegative".into()));
    }
    let total: f64 = target.iter().sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(EncoderError::InvalidTarget(format!("sums to {total}")));
    }
    Ok(())
}

impl GradientBundle {
    pub fn zeros_like(model: &EncoderModel) -> Self {
        Self {
            point_layers: model.point_layers.iter().map(Dense::zeros_like).collect(),
            head_layers: model.head_layers.iter().map(Dense::zeros_like).collect(),
        }
    }

    fn all_layers(&self) -> impl Iterator<Item = &Dense> {
        self.point_layers.iter().chain(&self.head_layers)
    }

    fn all_layers_mut(&mut self) -> impl Iterator<Item = &mut Dense> {
        self.point_layers.iter_mut().chain(self.head_layers.iter_mut())
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.all_layers()
            .flat_map(|l| l.weight.iter().chain(&l.bias).copied())
            .collect()
    }

    pub fn add_assign(&mut self, other: &GradientBundle) {
        for (a, b) in self.all_layers_mut().zip(other.all_layers()) {
            for (x, y) in a.weight.iter_mut().zip(&b.weight).chain(a.bias.iter_mut().zip(&b.bias)) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in self.all_layers_mut() {
            for x in l.weight.iter_mut().chain(l.bias.iter_mut()) {
                *x *= factor;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.all_layers()
            .all(|l| l.weight.iter().chain(&l.bias).all(|v| v.is_finite()))
    }
}

impl MomentumState {
    pub fn zeros_like(model: &EncoderModel) -> Self {
        Self(GradientBundle::zeros_like(model))
    }
}

/// SGD with momentum and L2 weight decay:
/// `v ← momentum·v + grad + weight_decay·param; param ← param − lr·v`.
pub fn sgd_step(
    model: &mut EncoderModel,
    grads: &GradientBundle,
    lr: f64,
    momentum: f64,
    weight_decay: f64,
    state: &mut MomentumState,
) -> Result<()> {
    if !grads.is_finite() {
        return Err(EncoderError::NonFiniteGradient);
    }
    let layers = model.all_layers_mut().zip(grads.all_layers()).zip(state.0.all_layers_mut());
    for ((p, g), v) in layers {
        if p.weight.len() != g.weight.len() || p.weight.len() != v.weight.len() {
            return Err(EncoderError::ShapeMismatch("gradient does not match model".into()));
        }
        let params = p.weight.iter_mut().chain(p.bias.iter_mut());
        let grads = g.weight.iter().chain(&g.bias);
        let vel = v.weight.iter_mut().chain(v.bias.iter_mut());
        for ((p, g), v) in params.zip(grads).zip(vel) {
            *v = momentum * *v + g + weight_decay * *p;
            *p -= lr * *v;
        }
    }
    Ok(())
}
