//! Balanced pseudo-labeling.
//!
//! Model predictions are collected into a K×N joint probability matrix `P`
//! (each column is a softmax scaled by 1/N). The soft assignment `Q` solves
//! the entropy-regularized transport problem `min <Q, -log P>` over matrices
//! whose rows each carry mass 1/K and whose columns each carry mass 1/N, so
//! that pseudo classes stay equally populated. It is computed by
//! Sinkhorn-Knopp scaling of `P^lambda` in the log domain. Hard labels are the
//! column-wise argmax of `Q`.

use std::fmt::Write as _;

use thiserror::Error;

/// Floor applied to every entry of `P` so that `-log P` stays finite.
pub const PROB_FLOOR: f64 = 1e-30;

/// Marginal violation below which the scaling loop stops early.
pub const EARLY_STOP_TOLERANCE: f64 = 1e-8;

pub const DEFAULT_LAMBDA: f64 = 25.0;
pub const DEFAULT_SK_ITERATIONS: usize = 100;

#[derive(Debug, Error, PartialEq)]
pub enum SelfLabelError {
    #[error("need at least one sample and two classes (got N={n}, K={k})")]
    BadShape { k: usize, n: usize },
    #[error("logits of sample {0} are not finite")]
    NonFiniteLogits(usize),
    #[error("logit vector {index} has length {found}, expected {expected}")]
    RaggedLogits { index: usize, expected: usize, found: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("lambda must be positive and finite, got {0}")]
    InvalidLambda(f64),
    #[error("numerical overflow in scaling loop")]
    NumericalOverflow,
}

pub type Result<T> = std::result::Result<T, SelfLabelError>;

/// K×N joint probability matrix, row-major (one row per class).
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMatrix {
    k: usize,
    n: usize,
    values: Vec<f64>,
}

impl ProbMatrix {
    pub fn classes(&self) -> usize {
        self.k
    }

    pub fn samples(&self) -> usize {
        self.n
    }

    pub fn get(&self, class: usize, sample: usize) -> f64 {
        self.values[class * self.n + sample]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Build from raw entries, flooring at [`PROB_FLOOR`] and rescaling every
    /// column to mass 1/N.
    pub fn from_values(k: usize, n: usize, mut values: Vec<f64>) -> Result<Self> {
        if n == 0 || k < 2 {
            return Err(SelfLabelError::BadShape { k, n });
        }
        if values.len() != k * n {
            return Err(SelfLabelError::ShapeMismatch(format!("{} values for {k}x{n}", values.len())));
        }
        for j in 0..n {
            let mut total = 0.0;
            for i in 0..k {
                let v = &mut values[i * n + j];
                if !v.is_finite() || *v < 0.0 {
                    return Err(SelfLabelError::NonFiniteLogits(j));
                }
                *v = v.max(PROB_FLOOR);
                total += *v;
            }
            let scale = 1.0 / (total * n as f64);
            for i in 0..k {
                values[i * n + j] *= scale;
            }
        }
        Ok(Self { k, n, values })
    }
}

/// Soft assignment `Q` with (approximately) uniform marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftAssignment {
    k: usize,
    n: usize,
    values: Vec<f64>,
    pub lambda: f64,
    pub iterations_run: usize,
    /// Max marginal violation after each sweep.
    pub violations: Vec<f64>,
}

impl SoftAssignment {
    /// Wrap an arbitrary nonnegative matrix (e.g. a reloaded or hand-built Q).
    pub fn from_values(k: usize, n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != k * n {
            return Err(SelfLabelError::ShapeMismatch(format!("{} values for {k}x{n}", values.len())));
        }
        Ok(Self { k, n, values, lambda: f64::NAN, iterations_run: 0, violations: Vec::new() })
    }

    pub fn classes(&self) -> usize {
        self.k
    }

    pub fn samples(&self) -> usize {
        self.n
    }

    pub fn get(&self, class: usize, sample: usize) -> f64 {
        self.values[class * self.n + sample]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn column(&self, sample: usize) -> Vec<f64> {
        (0..self.k).map(|i| self.get(i, sample)).collect()
    }

    /// Column `sample` rescaled to sum 1, the per-sample training target.
    pub fn target(&self, sample: usize) -> Vec<f64> {
        let col = self.column(sample);
        let total: f64 = col.iter().sum();
        col.into_iter().map(|v| v / total).collect()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.values.chunks(self.n).map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.n];
        for row in self.values.chunks(self.n) {
            for (s, v) in sums.iter_mut().zip(row) {
                *s += v;
            }
        }
        sums
    }

    /// Largest absolute deviation of any row sum from 1/K or column sum from 1/N.
    pub fn marginal_violation(&self) -> f64 {
        let r = 1.0 / self.k as f64;
        let c = 1.0 / self.n as f64;
        let rows = self.row_sums().into_iter().map(|s| (s - r).abs());
        let cols = self.col_sums().into_iter().map(|s| (s - c).abs());
        rows.chain(cols).fold(0.0, f64::max)
    }

    /// Dense text dump, one row per class.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for row in self.values.chunks(self.n) {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            writeln!(out, "{}", cells.join(" ")).unwrap();
        }
        out
    }
}

/// Hard pseudo labels with the identifiers of the samples they belong to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    pub labels: Vec<usize>,
    pub sample_ids: Vec<String>,
    pub classes: usize,
}

impl LabelSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// CSV with header `sample_id,pseudo_label`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("sample_id,pseudo_label\n");
        for (id, l) in self.sample_ids.iter().zip(&self.labels) {
            writeln!(out, "{id},{l}").unwrap();
        }
        out
    }

    pub fn from_csv(text: &str, classes: usize) -> std::result::Result<Self, String> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == "sample_id,pseudo_label" => {}
            _ => return Err("missing header 'sample_id,pseudo_label'".into()),
        }
        let mut set = LabelSet { labels: Vec::new(), sample_ids: Vec::new(), classes };
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let (id, label) = line
                .rsplit_once(',')
                .ok_or_else(|| format!("line {}: expected 'sample_id,pseudo_label'", i + 1))?;
            let label: usize = label
                .trim()
                .parse()
                .map_err(|_| format!("line {}: invalid label '{label}'", i + 1))?;
            if label >= classes {
                return Err(format!("line {}: label {label} >= K={classes}", i + 1));
            }
            set.sample_ids.push(id.to_string());
            set.labels.push(label);
        }
        Ok(set)
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Column i of `P` is `softmax(logits[i]) / N`.
pub fn assemble_p(logits: &[Vec<f64>]) -> Result<ProbMatrix> {
    let n = logits.len();
    let k = logits.first().map_or(0, Vec::len);
    if n == 0 || k < 2 {
        return Err(SelfLabelError::BadShape { k, n });
    }
    let mut values = vec![0.0; k * n];
    for (j, z) in logits.iter().enumerate() {
        if z.len() != k {
            return Err(SelfLabelError::RaggedLogits { index: j, expected: k, found: z.len() });
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(SelfLabelError::NonFiniteLogits(j));
        }
        for (i, p) in softmax(z).into_iter().enumerate() {
            values[i * n + j] = p / n as f64;
        }
    }
    ProbMatrix::from_values(k, n, values)
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Entropic transport with uniform marginals.
///
/// `Q = diag(u) P^lambda diag(v)`. Each sweep rescales rows to 1/K and then
/// columns to 1/N; all scaling happens on logarithms, since `P^25` is far
/// below the smallest normal `f64` for ordinary probabilities. The loop
/// stops after `iterations` sweeps or once the marginal violation drops
/// below [`EARLY_STOP_TOLERANCE`]; the scaled plan is then rounded onto the
/// exact marginals. `violations` records the scaling loop's own progress.
pub fn sinkhorn_assign(p: &ProbMatrix, lambda: f64, iterations: usize) -> Result<SoftAssignment> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(SelfLabelError::InvalidLambda(lambda));
    }
    let (k, n) = (p.k, p.n);
    let log_kernel: Vec<f64> = p.values.iter().map(|v| lambda * v.ln()).collect();
    // Column-major copy for contiguous column reductions.
    let mut log_kernel_t = vec![0.0; k * n];
    for i in 0..k {
        for j in 0..n {
            log_kernel_t[j * k + i] = log_kernel[i * n + j];
        }
    }
    let log_r = -(k as f64).ln();
    let log_c = -(n as f64).ln();
    let mut row_pot = vec![0.0; k];
    let mut col_pot = vec![0.0; n];
    let mut violations = Vec::new();
    let mut row_mass = vec![0.0; k];

    for _ in 0..iterations {
        for i in 0..k {
            let row = &log_kernel[i * n..(i + 1) * n];
            let lse = log_sum_exp(row.iter().zip(&col_pot).map(|(a, b)| a + b));
            row_pot[i] = log_r - lse;
        }
        for j in 0..n {
            let col = &log_kernel_t[j * k..(j + 1) * k];
            let lse = log_sum_exp(col.iter().zip(&row_pot).map(|(a, b)| a + b));
            col_pot[j] = log_c - lse;
        }
        // Columns are exact after the column step; the violation is the rows'.
        row_mass.iter_mut().for_each(|m| *m = 0.0);
        for i in 0..k {
            let row = &log_kernel[i * n..(i + 1) * n];
            row_mass[i] = row.iter().zip(&col_pot).map(|(a, b)| (a + b + row_pot[i]).exp()).sum();
        }
        let violation = row_mass.iter().map(|m| (m - 1.0 / k as f64).abs()).fold(0.0, f64::max);
        if !violation.is_finite() {
            return Err(SelfLabelError::NumericalOverflow);
        }
        violations.push(violation);
        if violation < EARLY_STOP_TOLERANCE {
            break;
        }
    }

    let mut values = vec![0.0; k * n];
    for i in 0..k {
        for j in 0..n {
            values[i * n + j] = (log_kernel[i * n + j] + row_pot[i] + col_pot[j]).exp();
        }
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(SelfLabelError::NumericalOverflow);
    }
    round_to_marginals(k, n, &mut values);
    Ok(SoftAssignment { k, n, values, lambda, iterations_run: violations.len(), violations })
}

/// Project an approximately balanced plan onto the exact marginals
/// (Altschuler, Weed & Rigollet rounding): shrink overfull rows and columns,
/// then spread the missing mass as a rank-one correction. At λ = 25 the
/// scaling loop typically stops at row errors around 1e-3 after 100 sweeps;
/// the correction moves at most that much mass.
fn round_to_marginals(k: usize, n: usize, values: &mut [f64]) {
    let r = 1.0 / k as f64;
    let c = 1.0 / n as f64;
    for row in values.chunks_mut(n) {
        let total: f64 = row.iter().sum();
        if total > r {
            let s = r / total;
            row.iter_mut().for_each(|v| *v *= s);
        }
    }
    let mut col_total = vec![0.0; n];
    for row in values.chunks(n) {
        for (t, v) in col_total.iter_mut().zip(row) {
            *t += v;
        }
    }
    let col_scale: Vec<f64> = col_total.iter().map(|&t| if t > c { c / t } else { 1.0 }).collect();
    for row in values.chunks_mut(n) {
        for (v, s) in row.iter_mut().zip(&col_scale) {
            *v *= s;
        }
    }
    let row_err: Vec<f64> = values.chunks(n).map(|row| (r - row.iter().sum::<f64>()).max(0.0)).collect();
    let mut col_err = vec![c; n];
    for row in values.chunks(n) {
        for (e, v) in col_err.iter_mut().zip(row) {
            *e -= v;
        }
    }
    col_err.iter_mut().for_each(|e| *e = e.max(0.0));
    let mass: f64 = row_err.iter().sum();
    if mass <= 0.0 {
        return;
    }
    for (row, re) in values.chunks_mut(n).zip(&row_err) {
        for (v, ce) in row.iter_mut().zip(&col_err) {
            *v += re * ce / mass;
        }
    }
}

/// `<Q, -log P>`, with `0 * log(anything) = 0`.
pub fn objective(q: &SoftAssignment, p: &ProbMatrix) -> Result<f64> {
    if q.k != p.k || q.n != p.n {
        return Err(SelfLabelError::ShapeMismatch(format!(
            "Q is {}x{}, P is {}x{}",
            q.k, q.n, p.k, p.n
        )));
    }
    Ok(q
        .values
        .iter()
        .zip(&p.values)
        .filter(|(qv, _)| **qv != 0.0)
        .map(|(qv, pv)| -qv * pv.ln())
        .sum())
}

/// Index of the largest entry; the first one wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Column-wise argmax of `Q`.
pub fn extract_labels(q: &SoftAssignment, sample_ids: Vec<String>) -> Result<LabelSet> {
    if sample_ids.len() != q.n {
        return Err(SelfLabelError::ShapeMismatch(format!(
            "{} sample ids for {} columns",
            sample_ids.len(),
            q.n
        )));
    }
    let labels = (0..q.n).map(|j| argmax(&q.column(j))).collect();
    Ok(LabelSet { labels, sample_ids, classes: q.k })
}

/// Label-histogram entropy (nats) and per-class occupancy.
pub fn degeneracy_report(labels: &LabelSet, classes: usize) -> (f64, Vec<usize>) {
    let width = classes.max(labels.labels.iter().map(|&l| l + 1).max().unwrap_or(0));
    let mut occupancy = vec![0usize; width];
    for &l in &labels.labels {
        occupancy[l] += 1;
    }
    let total = labels.len() as f64;
    let entropy = occupancy
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.ln()
        })
        .sum::<f64>();
    (entropy + 0.0, occupancy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("s{i}")).collect()
    }

    fn random_p(seed: u64, k: usize, n: usize, spread: f64) -> ProbMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let logits: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..k).map(|_| rng.random_range(-spread..spread)).collect())
            .collect();
        assemble_p(&logits).unwrap()
    }

    #[test]
    fn uniform_logits_give_uniform_p() {
        let p = assemble_p(&[vec![0.0; 4], vec![0.0; 4]]).unwrap();
        assert!(p.values().iter().all(|&v| v == 0.125));
    }

    #[test]
    fn closed_form_softmax_column() {
        let p = assemble_p(&[vec![3f64.ln(), 0.0]]).unwrap();
        assert!((p.get(0, 0) - 0.75).abs() < 1e-15);
        assert!((p.get(1, 0) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn assemble_errors() {
        assert!(matches!(assemble_p(&[]), Err(SelfLabelError::BadShape { .. })));
        assert!(matches!(assemble_p(&[vec![1.0]]), Err(SelfLabelError::BadShape { .. })));
        assert_eq!(assemble_p(&[vec![0.0, f64::NAN]]), Err(SelfLabelError::NonFiniteLogits(0)));
        assert!(matches!(
            assemble_p(&[vec![0.0, 1.0], vec![0.0]]),
            Err(SelfLabelError::RaggedLogits { index: 1, .. })
        ));
    }

    #[test]
    fn extreme_logits_are_floored() {
        let p = assemble_p(&[vec![0.0, -1e4], vec![-1e4, 0.0]]).unwrap();
        assert!(p.values().iter().all(|&v| v > 0.0));
    }

    proptest! {
        #[test]
        fn columns_sum_to_one_over_n(seed in 0u64..500, k in 2usize..12, n in 1usize..40, spread in 0.1f64..80.0) {
            let p = random_p(seed, k, n, spread);
            for j in 0..n {
                let s: f64 = (0..k).map(|i| p.get(i, j)).sum();
                prop_assert!((s - 1.0 / n as f64).abs() < 1e-9);
            }
            prop_assert!(p.values().iter().all(|&v| v > 0.0 && v <= 1.0));
        }

        #[test]
        fn argmax_is_scale_invariant(seed in 0u64..500, scale in 1e-3f64..1e3) {
            let p = random_p(seed, 4, 9, 3.0);
            let q = sinkhorn_assign(&p, 25.0, 100).unwrap();
            let base = extract_labels(&q, ids(9)).unwrap();
            let mut scaled = q.values().to_vec();
            let col = (seed % 9) as usize;
            for i in 0..4 {
                scaled[i * 9 + col] *= scale;
            }
            let q2 = SoftAssignment::from_values(4, 9, scaled).unwrap();
            prop_assert_eq!(extract_labels(&q2, ids(9)).unwrap(), base);
        }
    }

    #[test]
    fn uniform_p_is_a_fixed_point() {
        let p = assemble_p(&vec![vec![0.0; 3]; 5]).unwrap();
        let q = sinkhorn_assign(&p, 25.0, 100).unwrap();
        for v in q.values() {
            assert!((v - 1.0 / 15.0).abs() < 1e-15);
        }
    }

    #[test]
    fn near_hard_diagonal_two_by_two() {
        // Columns (0.4, 0.1)/0.5 and (0.1, 0.4)/0.5, each scaled by 1/2.
        let p = ProbMatrix::from_values(2, 2, vec![0.4, 0.1, 0.1, 0.4]).unwrap();
        assert!((p.get(0, 0) - 0.4).abs() < 1e-15);
        let q = sinkhorn_assign(&p, 25.0, 100).unwrap();
        let expect = [0.5, 0.0, 0.0, 0.5];
        for (v, e) in q.values().iter().zip(expect) {
            assert!((v - e).abs() < 1e-3, "{:?}", q.values());
        }
        assert_eq!(extract_labels(&q, ids(2)).unwrap().labels, vec![0, 1]);
    }

    #[test]
    fn marginals_feasible_and_monotone() {
        for seed in 0..20 {
            let k = 2 + (seed as usize % 9);
            let n = 10 + 37 * seed as usize;
            let p = random_p(seed, k, n, 4.0);
            let q = sinkhorn_assign(&p, 25.0, 100).unwrap();
            assert!(q.marginal_violation() < 1e-6, "seed {seed}: {}", q.marginal_violation());
            let every_ten: Vec<f64> = q.violations.iter().step_by(10).copied().collect();
            for w in every_ten.windows(2) {
                assert!(w[1] <= w[0], "seed {seed}: {every_ten:?}");
            }
        }
    }

    #[test]
    fn deterministic() {
        let p = random_p(8, 5, 60, 3.0);
        let a = sinkhorn_assign(&p, 25.0, 100).unwrap();
        let b = sinkhorn_assign(&p, 25.0, 100).unwrap();
        assert_eq!(a.values(), b.values());
    }

    #[test]
    fn lambda_validation() {
        let p = random_p(1, 2, 3, 1.0);
        assert_eq!(sinkhorn_assign(&p, 0.0, 10), Err(SelfLabelError::InvalidLambda(0.0)));
    }

    #[test]
    fn objective_closed_forms() {
        let p = assemble_p(&[vec![0.0; 2], vec![0.0; 2]]).unwrap();
        let q = SoftAssignment::from_values(2, 2, vec![0.25; 4]).unwrap();
        assert!((objective(&q, &p).unwrap() - 4f64.ln()).abs() < 1e-12);

        let mut tiny = ProbMatrix::from_values(2, 1, vec![1.0, 0.0]).unwrap();
        tiny.values[1] = 0.0;
        let q = SoftAssignment::from_values(2, 1, vec![1.0, 0.0]).unwrap();
        assert_eq!(objective(&q, &tiny).unwrap(), 0.0);

        let wrong = SoftAssignment::from_values(2, 2, vec![0.25; 4]).unwrap();
        assert!(objective(&wrong, &tiny).is_err());
    }

    #[test]
    fn sinkhorn_beats_random_feasible_points() {
        // Random feasible Q: mix of permutation-like plans for K | N.
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for seed in 0..30 {
            let (k, n) = (3, 6);
            let p = random_p(seed, k, n, 3.0);
            let q = sinkhorn_assign(&p, 25.0, 100).unwrap();
            let mine = objective(&q, &p).unwrap();
            // entropic slack: at most log(KN)/lambda above the unregularized value.
            let slack = ((k * n) as f64).ln() / 25.0;
            for _ in 0..20 {
                let mut cols: Vec<usize> = (0..n).map(|j| j % k).collect();
                for j in (1..n).rev() {
                    cols.swap(j, rng.random_range(0..=j));
                }
                let mut vals = vec![0.0; k * n];
                for (j, &c) in cols.iter().enumerate() {
                    vals[c * n + j] = 1.0 / n as f64;
                }
                let other = SoftAssignment::from_values(k, n, vals).unwrap();
                assert!(other.marginal_violation() < 1e-12);
                assert!(mine <= objective(&other, &p).unwrap() + slack);
            }
        }
    }

    #[test]
    fn labels_and_ties() {
        let q = SoftAssignment::from_values(2, 2, vec![0.3, 0.1, 0.2, 0.4]).unwrap();
        assert_eq!(extract_labels(&q, ids(2)).unwrap().labels, vec![0, 1]);
        let tied = SoftAssignment::from_values(2, 1, vec![0.25, 0.25]).unwrap();
        assert_eq!(extract_labels(&tied, ids(1)).unwrap().labels, vec![0]);
        assert!(extract_labels(&tied, ids(3)).is_err());
    }

    #[test]
    fn degeneracy_entropy() {
        let set = |labels: Vec<usize>| LabelSet { sample_ids: ids(labels.len()), labels, classes: 4 };
        let (h, occ) = degeneracy_report(&set(vec![2; 10]), 4);
        assert_eq!(h, 0.0);
        assert_eq!(occ, vec![0, 0, 10, 0]);
        let (h, _) = degeneracy_report(&set(vec![0, 1, 2, 3, 3, 2, 1, 0]), 4);
        assert!((h - 4f64.ln()).abs() < 1e-12);
        let (h, _) = degeneracy_report(&LabelSet { labels: vec![0, 0, 0, 1], sample_ids: ids(4), classes: 2 }, 2);
        assert!((h - 0.5623351446188083).abs() < 1e-12);
    }

    #[test]
    fn labels_csv_round_trip() {
        let set = LabelSet { labels: vec![1, 0, 2], sample_ids: vec!["a".into(), "b,c".into(), "d".into()], classes: 3 };
        let csv = set.to_csv();
        assert!(csv.starts_with("sample_id,pseudo_label\n"));
        assert_eq!(LabelSet::from_csv(&csv, 3).unwrap(), set);
        assert!(LabelSet::from_csv(&csv, 2).is_err());
    }
}
