//! Process reward models: scorers that map a reasoning prefix to [0, 1].
//!
//! Search strategies only see the [`Prm`] trait. Two implementations live
//! here: a noisy oracle that perturbs the ground-truth reward with bounded,
//! path-keyed noise (deterministic across runs and threads by construction),
//! and a small trained network over hand-rolled prefix features. The module
//! also carries the sparsity instrumentation used by the generalization
//! bound: near-zero parameter fractions, the sparsity-aware bound itself, and
//! the rank correlation used to relate sparsity to downstream error.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::core::{ReasoningPath, RngStream};
use crate::error::{Error, Result};
use crate::nn::{self, AdamState, Head, Mlp};

/// Parameters with magnitude at or below this count as zero for sparsity.
pub const SPARSITY_THRESHOLD: f64 = 1e-4;

/// Number of inputs for the trained scorer's feature map.
pub const PRM_FEATURE_DIM: usize = 6;

/// Structural summary of a scorer's parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct SparsityStats {
    pub param_count: u64,
    /// Fraction of all parameters that are near zero; in [0, 1].
    pub total_sparsity: f64,
    /// Near-zero fraction of the final layer only; in [0, 1].
    pub last_layer_sparsity: f64,
}

/// A process reward model: scores any prefix of a reasoning path in [0, 1].
pub trait Prm: Send + Sync {
    fn score(&self, path: &ReasoningPath) -> f64;
    fn sparsity_stats(&self) -> SparsityStats;
    /// Short label used in result tables.
    fn name(&self) -> String;
}

/// Ground-truth reward scorer with bounded symmetric noise.
///
/// The noise for a path is a deterministic function of the noise seed and a
/// fingerprint of the path contents, so repeated queries agree with each
/// other, across threads and across runs, without any caching. `epsilon` is
/// the noise half-width; zero gives the exact oracle.
#[derive(Debug, Clone)]
pub struct NoisyOraclePrm {
    epsilon: f64,
    noise_seed: u64,
    stats: SparsityStats,
}

impl NoisyOraclePrm {
    pub fn new(epsilon: f64, noise_seed: u64) -> Result<Self> {
        if !epsilon.is_finite() || !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::Config(format!(
                "oracle noise level must lie in [0, 1], got {epsilon}"
            )));
        }
        Ok(NoisyOraclePrm { epsilon, noise_seed, stats: SparsityStats::default() })
    }

    /// Overrides the advertised sparsity statistics; the oracle has no real
    /// parameters, so experiments inject whatever profile they model.
    pub fn with_stats(mut self, stats: SparsityStats) -> Self {
        self.stats = stats;
        self
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    fn fingerprint(path: &ReasoningPath) -> u64 {
        let mut h = Fnv1a::new();
        h.write_u64(path.question_id().0);
        h.write_u64(path.len() as u64);
        for step in path.steps() {
            match step.quality() {
                Some(q) => h.write_u64(q.to_bits()),
                None => h.write_u64(u64::MAX),
            }
        }
        h.finish()
    }
}

impl Prm for NoisyOraclePrm {
    fn score(&self, path: &ReasoningPath) -> f64 {
        if path.is_empty() {
            return 0.5;
        }
        let mut sum = 0.0;
        let mut counted = 0usize;
        for step in path.steps() {
            if let Some(q) = step.quality() {
                sum += q;
                counted += 1;
            }
        }
        if counted == 0 {
            // Non-synthetic steps carry no quality signal; stay neutral.
            return 0.5;
        }
        let reward = sum / counted as f64;
        let u: f64 = RngStream::new(self.noise_seed, Self::fingerprint(path)).rng().gen();
        (reward + self.epsilon * (2.0 * u - 1.0)).clamp(0.0, 1.0)
    }

    fn sparsity_stats(&self) -> SparsityStats {
        self.stats
    }

    fn name(&self) -> String {
        format!("oracle-eps{}", self.epsilon)
    }
}

struct Fnv1a(u64);

impl Fnv1a {
    fn new() -> Self {
        Fnv1a(0xcbf2_9ce4_8422_2325)
    }

    fn write_u64(&mut self, v: u64) {
        for b in v.to_le_bytes() {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    fn finish(&self) -> u64 {
        self.0
    }
}

/// Binary cross entropy, summed over samples. Predictions are clamped away
/// from 0 and 1 so the loss stays finite on saturated outputs.
pub fn prm_loss(predictions: &[f64], labels: &[bool]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions vs {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut loss = 0.0;
    for (&p, &y) in predictions.iter().zip(labels) {
        let p = p.clamp(1e-7, 1.0 - 1e-7);
        loss -= if y { p.ln() } else { (1.0 - p).ln() };
    }
    Ok(loss)
}

/// One labeled prefix for scorer training.
#[derive(Debug, Clone, PartialEq)]
pub struct PrmExample {
    pub features: Vec<f64>,
    pub label: bool,
}

/// Fixed-width summary of a prefix: fill fraction, mean, last, min, max, and
/// population standard deviation of the step qualities. The empty prefix maps
/// to the neutral point.
pub fn path_features(path: &ReasoningPath, depth: usize) -> Result<Vec<f64>> {
    if depth == 0 {
        return Err(Error::Config("feature map needs depth >= 1".into()));
    }
    if path.is_empty() {
        return Ok(vec![0.0, 0.5, 0.5, 0.5, 0.5, 0.0]);
    }
    let mut qs = Vec::with_capacity(path.len());
    for step in path.steps() {
        qs.push(step.quality().ok_or(Error::NonSyntheticStep)?);
    }
    let n = qs.len() as f64;
    let mean = qs.iter().sum::<f64>() / n;
    let var = qs.iter().map(|q| (q - mean).powi(2)).sum::<f64>() / n;
    let min = qs.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = qs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(vec![
        (path.len() as f64 / depth as f64).min(1.0),
        mean,
        *qs.last().expect("nonempty"),
        min,
        max,
        var.sqrt(),
    ])
}

/// Expands one graded rollout into per-prefix training examples, labeling
/// each nonempty prefix by whether its own mean quality clears `tau`.
pub fn prefix_examples(
    task: &crate::env::SyntheticTask,
    path: &ReasoningPath,
) -> Result<Vec<PrmExample>> {
    let mut out = Vec::with_capacity(path.len());
    let mut prefix = ReasoningPath::new(path.question_id());
    for step in path.steps() {
        prefix.push_step(step.clone())?;
        let features = path_features(&prefix, task.depth)?;
        let reward = crate::env::true_reward(task, &prefix)?;
        out.push(PrmExample { features, label: reward >= task.tau });
    }
    Ok(out)
}

/// Per-step mean training loss, recorded before each update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrmTrainingLog {
    pub losses: Vec<f64>,
}

/// A learned scorer: a small network over [`path_features`] with a sigmoid
/// squashing the single output into [0, 1].
#[derive(Debug, Clone)]
pub struct TrainedPrm {
    net: Mlp,
    depth: usize,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Full-batch training with adaptive moment updates. `steps = 0` returns the
/// untouched initialization; identical seeds give identical scorers.
pub fn train_prm(
    examples: &[PrmExample],
    hidden: usize,
    steps: u64,
    lr: f64,
    stream: &RngStream,
) -> Result<(TrainedPrm, PrmTrainingLog)> {
    if examples.is_empty() {
        return Err(Error::EmptyResults);
    }
    if hidden == 0 {
        return Err(Error::Config("scorer needs at least one hidden unit".into()));
    }
    for ex in examples {
        if ex.features.len() != PRM_FEATURE_DIM {
            return Err(Error::ShapeMismatch(format!(
                "expected {PRM_FEATURE_DIM} features, got {}",
                ex.features.len()
            )));
        }
    }
    let mut net = Mlp::new(&[PRM_FEATURE_DIM, hidden, 1], Head::Identity, stream)?;
    if !lr.is_finite() || lr <= 0.0 {
        return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
    }
    let mut adam = AdamState::new(&net, lr);
    let n = examples.len() as f64;
    let mut losses = Vec::with_capacity(steps as usize);
    for _ in 0..steps {
        let mut grads = nn::Gradients::zeros_like(&net);
        let mut preds = Vec::with_capacity(examples.len());
        let mut labels = Vec::with_capacity(examples.len());
        for ex in examples {
            let (out, cache) = net.forward(&ex.features)?;
            let p = sigmoid(out[0]);
            preds.push(p);
            labels.push(ex.label);
            // d(BCE)/d(logit) through the sigmoid is prediction minus target.
            let g = (p - if ex.label { 1.0 } else { 0.0 }) / n;
            grads.add(&net.backward(&cache, &[g])?);
        }
        losses.push(prm_loss(&preds, &labels)? / n);
        nn::adam_step(&mut net, &grads, &mut adam)?;
    }
    Ok((TrainedPrm { net, depth: 1 }, PrmTrainingLog { losses }))
}

impl TrainedPrm {
    /// Sets the task depth used by the fill-fraction feature.
    pub fn with_depth(mut self, depth: usize) -> Result<Self> {
        if depth == 0 {
            return Err(Error::Config("scorer depth must be at least 1".into()));
        }
        self.depth = depth;
        Ok(self)
    }

    pub fn score_features(&self, features: &[f64]) -> Result<f64> {
        let (out, _) = self.net.forward(features)?;
        Ok(sigmoid(out[0]))
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    /// Serializes the scorer; the format embeds the network checkpoint.
    pub fn to_json(&self) -> Result<serde_json::Value> {
        Ok(serde_json::json!({
            "format_version": 1,
            "depth": self.depth,
            "net": nn::save_checkpoint(&self.net, None)?,
        }))
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        let version = value.get("format_version").and_then(|v| v.as_u64());
        if version != Some(1) {
            return Err(Error::Config(format!("unsupported scorer format_version {version:?}")));
        }
        let depth = value
            .get("depth")
            .and_then(|v| v.as_u64())
            .filter(|&d| d >= 1)
            .ok_or_else(|| Error::Config("scorer checkpoint missing depth".into()))?;
        let net_value =
            value.get("net").ok_or_else(|| Error::Config("scorer checkpoint missing net".into()))?;
        let (net, _) = nn::load_checkpoint(net_value)?;
        if net.input_dim() != PRM_FEATURE_DIM || net.output_dim() != 1 {
            return Err(Error::ShapeMismatch(format!(
                "scorer network must map {PRM_FEATURE_DIM} -> 1, got {} -> {}",
                net.input_dim(),
                net.output_dim()
            )));
        }
        Ok(TrainedPrm { net, depth: depth as usize })
    }
}

impl Prm for TrainedPrm {
    fn score(&self, path: &ReasoningPath) -> f64 {
        path_features(path, self.depth).and_then(|f| self.score_features(&f)).unwrap_or(0.5)
    }

    fn sparsity_stats(&self) -> SparsityStats {
        sparsity(&self.net, SPARSITY_THRESHOLD).expect("validated network has parameters")
    }

    fn name(&self) -> String {
        "trained".into()
    }
}

/// Near-zero parameter fractions for explicit layer matrices.
pub fn sparsity_from_layers(
    weights: &[Vec<f64>],
    biases: &[Vec<f64>],
    threshold: f64,
) -> Result<SparsityStats> {
    if threshold < 0.0 || !threshold.is_finite() {
        return Err(Error::Config(format!("sparsity threshold must be nonnegative, got {threshold}")));
    }
    if weights.len() != biases.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} weight layers vs {} bias layers",
            weights.len(),
            biases.len()
        )));
    }
    let mut total = 0u64;
    let mut total_zero = 0u64;
    let mut last = 0u64;
    let mut last_zero = 0u64;
    let layer_count = weights.len();
    for (l, (w, b)) in weights.iter().zip(biases).enumerate() {
        let params = w.iter().chain(b.iter());
        let mut count = 0u64;
        let mut zero = 0u64;
        for &p in params {
            count += 1;
            if p.abs() <= threshold {
                zero += 1;
            }
        }
        total += count;
        total_zero += zero;
        if l + 1 == layer_count {
            last = count;
            last_zero = zero;
        }
    }
    if total == 0 {
        return Err(Error::EmptyModel);
    }
    Ok(SparsityStats {
        param_count: total,
        total_sparsity: total_zero as f64 / total as f64,
        last_layer_sparsity: if last == 0 { 0.0 } else { last_zero as f64 / last as f64 },
    })
}

/// Near-zero parameter fractions of a network at the given threshold.
pub fn sparsity(net: &Mlp, threshold: f64) -> Result<SparsityStats> {
    sparsity_from_layers(net.weights(), net.biases(), threshold)
}

/// Sparsity-aware generalization bound:
/// sqrt((c * nnz * ln(d) + ln(n / delta)) / (2 (n - 1))).
///
/// `nnz` counts effective nonzero parameters, `d` the total parameter count,
/// `c` the bits-per-parameter constant, `n` the sample count.
pub fn sparsity_bound(c: f64, nnz: u64, d: u64, n: u64, delta: f64) -> Result<f64> {
    if !c.is_finite() || c <= 0.0 {
        return Err(Error::Config(format!("bound constant must be positive, got {c}")));
    }
    if d < 1 {
        return Err(Error::Config("total parameter count must be at least 1".into()));
    }
    if nnz > d {
        return Err(Error::Config(format!("nnz {nnz} exceeds total parameter count {d}")));
    }
    if n < 2 {
        return Err(Error::InvalidSampleSize(n));
    }
    if !delta.is_finite() || delta <= 0.0 || delta > 1.0 {
        return Err(Error::Config(format!("confidence delta must lie in (0, 1], got {delta}")));
    }
    let numerator = c * nnz as f64 * (d as f64).ln() + (n as f64 / delta).ln();
    Ok((numerator / (2.0 * (n as f64 - 1.0))).sqrt())
}

/// Gap between held-out and training zero-one error at threshold 0.5.
pub fn empirical_gen_error<F>(scorer: F, train: &[PrmExample], test: &[PrmExample]) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    if train.is_empty() || test.is_empty() {
        return Err(Error::EmptyResults);
    }
    let err = |set: &[PrmExample]| {
        let wrong = set
            .iter()
            .filter(|ex| (scorer(&ex.features) >= 0.5) != ex.label)
            .count();
        wrong as f64 / set.len() as f64
    };
    Ok(err(test) - err(train))
}

/// Rank correlation via the classical squared-difference formula on mid-ranks:
/// 1 - 6 sum(d^2) / (n (n^2 - 1)). Ties receive the mean of their positions.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::ShapeMismatch(format!("{} xs vs {} ys", xs.len(), ys.len())));
    }
    let n = xs.len();
    if n < 2 {
        return Err(Error::DegenerateInputs("rank correlation needs at least 2 points".into()));
    }
    for &v in xs.iter().chain(ys.iter()) {
        if !v.is_finite() {
            return Err(Error::DegenerateInputs("rank correlation needs finite values".into()));
        }
    }
    let rx = mid_ranks(xs);
    let ry = mid_ranks(ys);
    let d2: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - b).powi(2)).sum();
    let n = n as f64;
    Ok(1.0 - 6.0 * d2 / (n * (n * n - 1.0)))
}

fn mid_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // Positions i..=j (zero based) share the mean one-based rank.
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// One row of the scorer sparsity reference table.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsityRecord {
    pub model: String,
    pub param_count: u64,
    pub total_sparsity: f64,
    pub last_layer_sparsity: f64,
    pub test_err: f64,
}

/// Parses the reference table (CSV with a header row) shipped under
/// `fixtures/prm_sparsity_reference.csv`.
pub fn parse_sparsity_table(text: &str) -> Result<Vec<SparsityRecord>> {
    let mut rows = Vec::new();
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or(Error::EmptyResults)?;
    let expected = "model,param_count,total_sparsity,last_layer_sparsity,test_err";
    if header.trim() != expected {
        return Err(Error::Config(format!("unexpected sparsity table header: {header}")));
    }
    for line in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 5 {
            return Err(Error::Config(format!("sparsity table row needs 5 fields: {line}")));
        }
        let parse_f = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::Config(format!("bad number '{s}' in sparsity table")))
        };
        rows.push(SparsityRecord {
            model: fields[0].to_string(),
            param_count: fields[1]
                .parse()
                .map_err(|_| Error::Config(format!("bad count '{}' in sparsity table", fields[1])))?,
            total_sparsity: parse_f(fields[2])?,
            last_layer_sparsity: parse_f(fields[3])?,
            test_err: parse_f(fields[4])?,
        });
    }
    if rows.is_empty() {
        return Err(Error::EmptyResults);
    }
    Ok(rows)
}
