//! Minimal fully-connected networks in f64: ReLU hidden layers, an identity
//! or softmax head, exact backprop gradients, bias-corrected Adam, and a
//! versioned JSON checkpoint format that round-trips bit-exactly.
//!
//! Everything is scalar f64 on purpose: the actor/critic nets are tiny and
//! the test suite verifies the analytic gradients against central finite
//! differences, which needs deterministic, full-precision arithmetic.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::core::{RngStream, StreamRng};
use crate::error::{Error, Result};

/// Output head applied after the last affine layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Head {
    /// Raw affine outputs (critic values, PRM logits).
    Identity,
    /// Stable softmax (actor action distributions).
    Softmax,
}

/// A fully-connected network. `sizes = [in, h1, ..., out]`; weights are stored
/// row-major per layer (`weights[l][o * in + i]` connects input `i` to output
/// `o`). Hidden activations are ReLU; the head is applied on the final layer
/// only.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    head: Head,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    /// Bumped on every parameter mutation; guards cached activations.
    version: u64,
}

/// Activations recorded by [`Mlp::forward`] for one input, consumed by
/// [`Mlp::backward`]. Tied to the parameter version that produced it.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    version: u64,
    input: Vec<f64>,
    /// Pre-activations z_l per layer.
    pre: Vec<Vec<f64>>,
    /// Post-activations a_l per layer (after ReLU / head).
    post: Vec<Vec<f64>>,
}

impl ForwardCache {
    /// Pre-activation vectors per layer, in forward order.
    pub fn pre_activations(&self) -> &[Vec<f64>] {
        &self.pre
    }
}

/// Parameter-shaped gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Gradients {
        Gradients {
            weights: net.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    /// Accumulates `other` into `self`.
    pub fn add(&mut self, other: &Gradients) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for w in &mut self.weights {
            for x in w {
                *x *= factor;
            }
        }
        for b in &mut self.biases {
            for x in b {
                *x *= factor;
            }
        }
    }

    /// Flattened view in the same order as [`Mlp::flat_params`].
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }
}

fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

impl Mlp {
    /// Builds a network with uniform Glorot init: weights drawn from
    /// U(-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))), biases zero.
    pub fn new(sizes: &[usize], head: Head, stream: &RngStream) -> Result<Mlp> {
        if sizes.len() < 2 {
            return Err(Error::ShapeMismatch(format!(
                "a network needs at least input and output sizes, got {sizes:?}"
            )));
        }
        if sizes.contains(&0) {
            return Err(Error::ShapeMismatch(format!("layer sizes must be positive, got {sizes:?}")));
        }
        let mut rng = stream.rng();
        let mut weights = Vec::with_capacity(sizes.len() - 1);
        let mut biases = Vec::with_capacity(sizes.len() - 1);
        for l in 0..sizes.len() - 1 {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let w: Vec<f64> =
                (0..fan_in * fan_out).map(|_| rng.gen_range(-limit..=limit)).collect();
            weights.push(w);
            biases.push(vec![0.0; fan_out]);
        }
        Ok(Mlp { sizes: sizes.to_vec(), head, weights, biases, version: 0 })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("validated at construction")
    }

    pub fn layer_count(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>()
            + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    /// All parameters flattened layer by layer, weights before biases.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }

    /// Replaces every parameter; the layout must match [`Mlp::flat_params`].
    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                params.len()
            )));
        }
        let mut offset = 0;
        for l in 0..self.weights.len() {
            let wl = self.weights[l].len();
            self.weights[l].copy_from_slice(&params[offset..offset + wl]);
            offset += wl;
            let bl = self.biases[l].len();
            self.biases[l].copy_from_slice(&params[offset..offset + bl]);
            offset += bl;
        }
        self.version += 1;
        Ok(())
    }

    /// Runs the network on one input, returning the output and the activation
    /// cache needed for backprop.
    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        if input.len() != self.sizes[0] {
            return Err(Error::ShapeMismatch(format!(
                "input has {} entries, network expects {}",
                input.len(),
                self.sizes[0]
            )));
        }
        let layers = self.weights.len();
        let mut pre = Vec::with_capacity(layers);
        let mut post = Vec::with_capacity(layers);
        let mut activation = input.to_vec();
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let mut z = self.biases[l].clone();
            let w = &self.weights[l];
            for o in 0..n_out {
                let row = &w[o * n_in..(o + 1) * n_in];
                let mut acc = 0.0;
                for (wi, ai) in row.iter().zip(&activation) {
                    acc += wi * ai;
                }
                z[o] += acc;
            }
            let a = if l + 1 == layers {
                match self.head {
                    Head::Identity => z.clone(),
                    Head::Softmax => softmax(&z),
                }
            } else {
                z.iter().map(|&v| relu(v)).collect()
            };
            pre.push(z);
            post.push(a.clone());
            activation = a;
        }
        let cache =
            ForwardCache { version: self.version, input: input.to_vec(), pre, post };
        Ok((activation, cache))
    }

    /// Exact gradients of a scalar loss with respect to every parameter, given
    /// the loss gradient with respect to the network output. The cache must
    /// come from a forward pass on the current parameters.
    pub fn backward(&self, cache: &ForwardCache, output_grad: &[f64]) -> Result<Gradients> {
        if cache.version != self.version {
            return Err(Error::StaleCache);
        }
        let layers = self.weights.len();
        if output_grad.len() != self.output_dim() {
            return Err(Error::ShapeMismatch(format!(
                "output gradient has {} entries, network emits {}",
                output_grad.len(),
                self.output_dim()
            )));
        }

        // Gradient with respect to the last pre-activation.
        let mut delta: Vec<f64> = match self.head {
            Head::Identity => output_grad.to_vec(),
            Head::Softmax => {
                let p = &cache.post[layers - 1];
                let dot: f64 = output_grad.iter().zip(p).map(|(g, pi)| g * pi).sum();
                p.iter().zip(output_grad).map(|(pi, gi)| pi * (gi - dot)).collect()
            }
        };

        let mut grads = Gradients::zeros_like(self);
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let below: &[f64] = if l == 0 { &cache.input } else { &cache.post[l - 1] };
            let gw = &mut grads.weights[l];
            for o in 0..n_out {
                let d = delta[o];
                grads.biases[l][o] = d;
                let row = &mut gw[o * n_in..(o + 1) * n_in];
                for (slot, a) in row.iter_mut().zip(below) {
                    *slot = d * a;
                }
            }
            if l > 0 {
                let w = &self.weights[l];
                let z_below = &cache.pre[l - 1];
                let mut next = vec![0.0; n_in];
                for o in 0..n_out {
                    let d = delta[o];
                    let row = &w[o * n_in..(o + 1) * n_in];
                    for (acc, wi) in next.iter_mut().zip(row) {
                        *acc += d * wi;
                    }
                }
                for (slot, &z) in next.iter_mut().zip(z_below) {
                    if z <= 0.0 {
                        *slot = 0.0;
                    }
                }
                delta = next;
            }
        }
        Ok(grads)
    }
}

/// Numerically stable softmax; the output always sums to 1 (up to rounding).
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Bias-corrected Adam state for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    m_weights: Vec<Vec<f64>>,
    v_weights: Vec<Vec<f64>>,
    m_biases: Vec<Vec<f64>>,
    v_biases: Vec<Vec<f64>>,
}

impl AdamState {
    /// Fresh zeroed state with the conventional defaults
    /// (beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8).
    pub fn new(net: &Mlp, lr: f64) -> AdamState {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m_weights: net.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            v_weights: net.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            m_biases: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
            v_biases: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// Applies one Adam update in place. Rejects non-finite gradients before
/// touching any parameter and bumps the network version so stale forward
/// caches are detected.
pub fn adam_step(net: &mut Mlp, grads: &Gradients, state: &mut AdamState) -> Result<()> {
    if grads.weights.len() != net.weights.len() || grads.biases.len() != net.biases.len() {
        return Err(Error::ShapeMismatch("gradient layer count differs from network".into()));
    }
    for (gw, w) in grads.weights.iter().zip(&net.weights) {
        if gw.len() != w.len() {
            return Err(Error::ShapeMismatch("gradient weight shape differs from network".into()));
        }
    }
    for (gb, b) in grads.biases.iter().zip(&net.biases) {
        if gb.len() != b.len() {
            return Err(Error::ShapeMismatch("gradient bias shape differs from network".into()));
        }
    }
    let finite = grads.weights.iter().chain(grads.biases.iter()).all(|v| {
        v.iter().all(|x| x.is_finite())
    });
    if !finite {
        return Err(Error::TrainingDiverged("non-finite gradient in adam step".into()));
    }

    state.step += 1;
    let (lr, beta1, beta2, eps) = (state.lr, state.beta1, state.beta2, state.epsilon);
    let t = state.step;
    let bc1 = 1.0 - beta1.powi(t as i32);
    let bc2 = 1.0 - beta2.powi(t as i32);
    let update = |params: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
        for i in 0..params.len() {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    };
    for l in 0..net.weights.len() {
        update(&mut net.weights[l], &grads.weights[l], &mut state.m_weights[l], &mut state.v_weights[l]);
        update(&mut net.biases[l], &grads.biases[l], &mut state.m_biases[l], &mut state.v_biases[l]);
    }
    net.version += 1;
    Ok(())
}

const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct NnCheckpoint {
    format_version: u32,
    layer_sizes: Vec<usize>,
    head: String,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    adam: Option<AdamCheckpoint>,
}

#[derive(Debug, Serialize, Deserialize)]
struct AdamCheckpoint {
    step: u64,
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    m_weights: Vec<Vec<f64>>,
    v_weights: Vec<Vec<f64>>,
    m_biases: Vec<Vec<f64>>,
    v_biases: Vec<Vec<f64>>,
}

fn head_name(head: Head) -> &'static str {
    match head {
        Head::Identity => "identity",
        Head::Softmax => "softmax",
    }
}

/// Serializes a network (and optionally its optimizer state) to JSON. Floats
/// are written in shortest round-trip form, so loading restores bit-identical
/// parameters.
pub fn save_checkpoint(net: &Mlp, adam: Option<&AdamState>) -> Result<serde_json::Value> {
    let ckpt = NnCheckpoint {
        format_version: CHECKPOINT_FORMAT_VERSION,
        layer_sizes: net.sizes.clone(),
        head: head_name(net.head).to_string(),
        weights: net.weights.clone(),
        biases: net.biases.clone(),
        adam: adam.map(|a| AdamCheckpoint {
            step: a.step,
            lr: a.lr,
            beta1: a.beta1,
            beta2: a.beta2,
            epsilon: a.epsilon,
            m_weights: a.m_weights.clone(),
            v_weights: a.v_weights.clone(),
            m_biases: a.m_biases.clone(),
            v_biases: a.v_biases.clone(),
        }),
    };
    Ok(serde_json::to_value(&ckpt)?)
}

/// Restores a network (and optimizer state, when present) from
/// [`save_checkpoint`] output. Unknown format versions and inconsistent
/// shapes are rejected.
pub fn load_checkpoint(value: &serde_json::Value) -> Result<(Mlp, Option<AdamState>)> {
    let ckpt: NnCheckpoint = serde_json::from_value(value.clone())?;
    if ckpt.format_version != CHECKPOINT_FORMAT_VERSION {
        return Err(Error::Config(format!(
            "unsupported checkpoint format_version {}, expected {}",
            ckpt.format_version, CHECKPOINT_FORMAT_VERSION
        )));
    }
    let head = match ckpt.head.as_str() {
        "identity" => Head::Identity,
        "softmax" => Head::Softmax,
        other => return Err(Error::Config(format!("unknown head kind {other:?}"))),
    };
    let sizes = ckpt.layer_sizes;
    if sizes.len() < 2 || sizes.contains(&0) {
        return Err(Error::ShapeMismatch(format!("bad layer sizes {sizes:?}")));
    }
    let layers = sizes.len() - 1;
    if ckpt.weights.len() != layers || ckpt.biases.len() != layers {
        return Err(Error::ShapeMismatch("layer count differs from layer_sizes".into()));
    }
    for l in 0..layers {
        if ckpt.weights[l].len() != sizes[l] * sizes[l + 1] || ckpt.biases[l].len() != sizes[l + 1] {
            return Err(Error::ShapeMismatch(format!("layer {l} parameter shape mismatch")));
        }
    }
    let all_finite = ckpt
        .weights
        .iter()
        .chain(ckpt.biases.iter())
        .all(|v| v.iter().all(|x| x.is_finite()));
    if !all_finite {
        return Err(Error::Config("checkpoint contains non-finite parameters".into()));
    }
    let net = Mlp { sizes, head, weights: ckpt.weights, biases: ckpt.biases, version: 0 };
    let adam = match ckpt.adam {
        None => None,
        Some(a) => {
            let shapes_match = a.m_weights.len() == layers
                && a.v_weights.len() == layers
                && a.m_biases.len() == layers
                && a.v_biases.len() == layers
                && (0..layers).all(|l| {
                    a.m_weights[l].len() == net.weights[l].len()
                        && a.v_weights[l].len() == net.weights[l].len()
                        && a.m_biases[l].len() == net.biases[l].len()
                        && a.v_biases[l].len() == net.biases[l].len()
                });
            if !shapes_match {
                return Err(Error::ShapeMismatch("optimizer state shape mismatch".into()));
            }
            Some(AdamState {
                lr: a.lr,
                beta1: a.beta1,
                beta2: a.beta2,
                epsilon: a.epsilon,
                step: a.step,
                m_weights: a.m_weights,
                v_weights: a.v_weights,
                m_biases: a.m_biases,
                v_biases: a.v_biases,
            })
        }
    };
    Ok((net, adam))
}

/// Central finite-difference gradient of `loss` with respect to every
/// parameter of `net`, using step `h`. Used by the test suite as the
/// independent oracle for [`Mlp::backward`].
pub fn finite_difference_grad<F>(net: &Mlp, h: f64, mut loss: F) -> Result<Vec<f64>>
where
    F: FnMut(&Mlp) -> Result<f64>,
{
    let base = net.flat_params();
    let mut probe = net.clone();
    let mut grad = vec![0.0; base.len()];
    for i in 0..base.len() {
        let mut plus = base.clone();
        plus[i] += h;
        probe.set_flat_params(&plus)?;
        let up = loss(&probe)?;
        let mut minus = base.clone();
        minus[i] -= h;
        probe.set_flat_params(&minus)?;
        let down = loss(&probe)?;
        grad[i] = (up - down) / (2.0 * h);
    }
    Ok(grad)
}

/// Draws a random input whose hidden pre-activations all stay at least
/// `margin` away from the ReLU kink, so finite differences are valid there.
pub fn kink_free_input(net: &Mlp, stream: &RngStream, margin: f64) -> Vec<f64> {
    let mut rng: StreamRng = stream.rng();
    loop {
        let x: Vec<f64> = (0..net.input_dim()).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let (_, cache) = net.forward(&x).expect("input built to match");
        let layers = cache.pre.len();
        let safe = cache.pre[..layers.saturating_sub(1)]
            .iter()
            .all(|z| z.iter().all(|&v| v.abs() > margin));
        if safe {
            return x;
        }
    }
}
