//! Small dense feed-forward nets trained by hand-derived backprop.
//!
//! The nets here are tiny (tens of inputs, two short hidden layers), so
//! everything is plain `Vec<f64>` arithmetic: ReLU hidden layers, a raw
//! logit output layer, an auxiliary-class cross-entropy loss, and Adam.
//! Gradients are exact derivatives of the *computed* loss, including its
//! probability clamping, which is what makes finite-difference checks
//! against [`backward`] meaningful.
//!
//! Training is bit-deterministic given the seed, the data order, and the
//! hyperparameters.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::softmax;
use crate::error::{Error, Result};

/// One affine layer, `output = weights * input + bias`, with weights
/// stored row-major (`output_dim` rows of `input_dim`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub input_dim: usize,
    pub output_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    fn zeros(input_dim: usize, output_dim: usize) -> Self {
        Self {
            input_dim,
            output_dim,
            weights: vec![0.0; input_dim * output_dim],
            bias: vec![0.0; output_dim],
        }
    }

    fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::InvalidInput(
                "layer dimensions must be positive".into(),
            ));
        }
        if self.weights.len() != self.input_dim * self.output_dim {
            return Err(Error::DimensionMismatch {
                context: "layer weights",
                expected: self.input_dim * self.output_dim,
                actual: self.weights.len(),
            });
        }
        if self.bias.len() != self.output_dim {
            return Err(Error::DimensionMismatch {
                context: "layer bias",
                expected: self.output_dim,
                actual: self.bias.len(),
            });
        }
        if self
            .weights
            .iter()
            .chain(&self.bias)
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidInput(
                "layer has a non-finite parameter".into(),
            ));
        }
        Ok(())
    }

    fn affine(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for r in 0..self.output_dim {
            let row = &self.weights[r * self.input_dim..(r + 1) * self.input_dim];
            let mut acc = self.bias[r];
            for (w, v) in row.iter().zip(x) {
                acc += w * v;
            }
            out.push(acc);
        }
    }
}

/// A feed-forward net: ReLU after every layer except the last, whose raw
/// affine output is the logit vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedForwardNet {
    layers: Vec<DenseLayer>,
}

impl FeedForwardNet {
    /// Builds a net from explicit layers, checking that consecutive
    /// dimensions chain and every parameter is finite.
    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self> {
        let net = Self { layers };
        net.validate()?;
        Ok(net)
    }

    /// Re-checks the structural invariants; deserialization bypasses the
    /// constructor, so loaders call this.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidInput("a net needs at least one layer".into()));
        }
        for l in &self.layers {
            l.validate()?;
        }
        for pair in self.layers.windows(2) {
            if pair[0].output_dim != pair[1].input_dim {
                return Err(Error::DimensionMismatch {
                    context: "consecutive layers",
                    expected: pair[0].output_dim,
                    actual: pair[1].input_dim,
                });
            }
        }
        Ok(())
    }

    /// An all-zero net with the given layer sizes, e.g. `[10, 50, 20, 11]`
    /// for two hidden layers. `dims` needs at least input and output;
    /// `[k, k+1]` (no hidden layer) is valid.
    pub fn zeros(dims: &[usize]) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::InvalidInput(
                "need at least input and output dimensions".into(),
            ));
        }
        Self::from_layers(
            dims.windows(2)
                .map(|w| DenseLayer::zeros(w[0], w[1]))
                .collect(),
        )
    }

    /// Seeded Glorot-uniform initialization: weights drawn uniformly from
    /// +-sqrt(6 / (fan_in + fan_out)), biases zero. The same seed and
    /// dims always produce the identical net.
    pub fn glorot_uniform(dims: &[usize], seed: u64) -> Result<Self> {
        let mut net = Self::zeros(dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut net.layers {
            let bound = (6.0 / (layer.input_dim + layer.output_dim) as f64).sqrt();
            for w in &mut layer.weights {
                *w = rng.gen_range(-bound..bound);
            }
        }
        Ok(net)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// Runs the net: ReLU between layers, raw output from the last.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let acts = self.forward_cached(x)?;
        Ok(acts.into_iter().last().expect("at least one layer"))
    }

    /// Forward pass keeping every intermediate: `acts[0]` is the input,
    /// `acts[i+1]` the output of layer i (post-ReLU except the last).
    pub(crate) fn forward_cached(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "net input",
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        let mut buf = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            layer.affine(acts.last().expect("nonempty"), &mut buf);
            if i + 1 < self.layers.len() {
                for v in &mut buf {
                    *v = v.max(0.0);
                }
            }
            acts.push(buf.clone());
        }
        Ok(acts)
    }

    /// All parameters flattened: layer by layer, weights then bias.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    /// Overwrites all parameters from a flat vector laid out as
    /// [`params`](Self::params) produces.
    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::DimensionMismatch {
                context: "flat parameter vector",
                expected: self.num_params(),
                actual: flat.len(),
            });
        }
        let mut i = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&flat[i..i + nw]);
            i += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&flat[i..i + nb]);
            i += nb;
        }
        Ok(())
    }

    /// Backpropagates `out_delta` (the loss gradient at the net's output)
    /// through cached activations, adding parameter gradients into
    /// `grads`.
    pub(crate) fn accumulate_grads(
        &self,
        acts: &[Vec<f64>],
        out_delta: &[f64],
        grads: &mut [LayerGrad],
    ) {
        let mut delta = out_delta.to_vec();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let input = &acts[l];
            let g = &mut grads[l];
            for (r, d) in delta.iter().enumerate() {
                g.bias[r] += d;
                let row = &mut g.weights[r * layer.input_dim..(r + 1) * layer.input_dim];
                for (gw, x) in row.iter_mut().zip(input) {
                    *gw += d * x;
                }
            }
            if l > 0 {
                // d loss / d input, masked by the ReLU that produced it.
                let mut prev = vec![0.0; layer.input_dim];
                for (r, d) in delta.iter().enumerate() {
                    let row = &layer.weights[r * layer.input_dim..(r + 1) * layer.input_dim];
                    for (p, w) in prev.iter_mut().zip(row) {
                        *p += d * w;
                    }
                }
                for (p, a) in prev.iter_mut().zip(input) {
                    if *a <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
        }
    }
}

/// Gradient (or moment) storage shaped like one [`DenseLayer`].
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LayerGrad {
    fn zeros_like(layer: &DenseLayer) -> Self {
        Self {
            weights: vec![0.0; layer.weights.len()],
            bias: vec![0.0; layer.bias.len()],
        }
    }
}

pub fn zero_grads(net: &FeedForwardNet) -> Vec<LayerGrad> {
    net.layers().iter().map(LayerGrad::zeros_like).collect()
}

/// Weights of the auxiliary-class cross-entropy loss.
///
/// With probabilities mu over K real classes plus the auxiliary class A
/// and a one-hot target w, the loss is
///
/// ```text
/// L = - sum_{k<A} w_k ln mu_k
///     - lambda1 (1 - w_A) ln(1 - mu_A)
///     - lambda2 w_A ln mu_A
/// ```
///
/// `lambda1` pushes probability mass away from the auxiliary class on
/// correctly classified samples; `lambda2` weighs misclassified samples.
/// With `lambda1 = 0, lambda2 = 1` this is exactly plain cross-entropy
/// over K+1 classes. Probabilities are clamped to
/// `[log_clamp, 1 - log_clamp]` before every logarithm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub log_clamp: f64,
}

impl LossConfig {
    pub const DEFAULT_CLAMP: f64 = 1e-12;

    pub fn new(lambda1: f64, lambda2: f64) -> Result<Self> {
        if !lambda1.is_finite() || !lambda2.is_finite() || lambda1 < 0.0 || lambda2 < 0.0 {
            return Err(Error::InvalidInput(format!(
                "loss weights must be finite and nonnegative, got ({lambda1}, {lambda2})"
            )));
        }
        Ok(Self {
            lambda1,
            lambda2,
            log_clamp: Self::DEFAULT_CLAMP,
        })
    }

    /// Plain cross-entropy over K+1 classes.
    pub fn cross_entropy() -> Self {
        Self {
            lambda1: 0.0,
            lambda2: 1.0,
            log_clamp: Self::DEFAULT_CLAMP,
        }
    }

    /// Re-checks the invariants (deserialization bypasses [`Self::new`]).
    pub fn validate(&self) -> Result<()> {
        Self::new(self.lambda1, self.lambda2)?;
        if !self.log_clamp.is_finite() || self.log_clamp <= 0.0 || self.log_clamp >= 0.5 {
            return Err(Error::InvalidInput(format!(
                "log clamp must lie in (0, 0.5), got {}",
                self.log_clamp
            )));
        }
        Ok(())
    }
}

fn clamp_prob(p: f64, eps: f64) -> f64 {
    p.clamp(eps, 1.0 - eps)
}

/// The auxiliary-class cross-entropy loss for one sample. `mu` is a
/// probability vector of length K+1 (auxiliary class last), `w` the
/// one-hot target of the same length.
pub fn ccac_loss(mu: &[f64], w: &[f64], cfg: &LossConfig) -> f64 {
    assert_eq!(mu.len(), w.len(), "probability and target lengths differ");
    assert!(mu.len() >= 2, "need at least one real class plus auxiliary");
    let a = mu.len() - 1;
    let eps = cfg.log_clamp;
    let mut loss = 0.0;
    for k in 0..a {
        if w[k] != 0.0 {
            loss -= w[k] * clamp_prob(mu[k], eps).ln();
        }
    }
    let mu_a = clamp_prob(mu[a], eps);
    if cfg.lambda1 != 0.0 && w[a] != 1.0 {
        loss -= cfg.lambda1 * (1.0 - w[a]) * (1.0 - mu_a).ln();
    }
    if cfg.lambda2 != 0.0 && w[a] != 0.0 {
        loss -= cfg.lambda2 * w[a] * mu_a.ln();
    }
    loss
}

/// d loss / d logits for one sample, where `mu = softmax(logits)`.
///
/// Matches the derivative of [`ccac_loss`] as computed, so where a
/// probability sits in a clamped region the corresponding term is flat
/// and contributes nothing.
pub(crate) fn loss_grad_wrt_logits(mu: &[f64], w: &[f64], cfg: &LossConfig) -> Vec<f64> {
    let a = mu.len() - 1;
    let eps = cfg.log_clamp;
    let mut g = vec![0.0; mu.len()];
    for k in 0..a {
        if w[k] != 0.0 && mu[k] > eps && mu[k] < 1.0 - eps {
            g[k] = -w[k] / mu[k];
        }
    }
    if mu[a] > eps && mu[a] < 1.0 - eps {
        let mut ga = 0.0;
        if cfg.lambda1 != 0.0 && w[a] != 1.0 {
            ga += cfg.lambda1 * (1.0 - w[a]) / (1.0 - mu[a]);
        }
        if cfg.lambda2 != 0.0 && w[a] != 0.0 {
            ga -= cfg.lambda2 * w[a] / mu[a];
        }
        g[a] = ga;
    }
    // Through the softmax: dL/do_i = mu_i * (g_i - sum_j g_j mu_j).
    let dot: f64 = g.iter().zip(mu).map(|(gi, mi)| gi * mi).sum();
    g.iter().zip(mu).map(|(gi, mi)| mi * (gi - dot)).collect()
}

/// Mean gradient of the loss over a batch of `(input, one_hot_target)`
/// pairs, with `mu = softmax(net(input))`.
pub fn backward(
    net: &FeedForwardNet,
    batch: &[(Vec<f64>, Vec<f64>)],
    cfg: &LossConfig,
) -> Result<Vec<LayerGrad>> {
    let idxs: Vec<usize> = (0..batch.len()).collect();
    let (grads, _) = backward_indexed(net, batch, &idxs, cfg)?;
    Ok(grads)
}

/// Like [`backward`] but over `data[idxs]`, also returning the mean loss
/// of the batch (computed from the same forward passes).
fn backward_indexed(
    net: &FeedForwardNet,
    data: &[(Vec<f64>, Vec<f64>)],
    idxs: &[usize],
    cfg: &LossConfig,
) -> Result<(Vec<LayerGrad>, f64)> {
    if idxs.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    let mut grads = zero_grads(net);
    let mut loss_sum = 0.0;
    for &i in idxs {
        let (x, w) = &data[i];
        if w.len() != net.output_dim() {
            return Err(Error::DimensionMismatch {
                context: "target vector",
                expected: net.output_dim(),
                actual: w.len(),
            });
        }
        let acts = net.forward_cached(x)?;
        let mu = softmax(acts.last().expect("output"))?;
        loss_sum += ccac_loss(&mu, w, cfg);
        let delta = loss_grad_wrt_logits(&mu, w, cfg);
        net.accumulate_grads(&acts, &delta, &mut grads);
    }
    let scale = 1.0 / idxs.len() as f64;
    for g in &mut grads {
        for v in &mut g.weights {
            *v *= scale;
        }
        for v in &mut g.bias {
            *v *= scale;
        }
    }
    Ok((grads, loss_sum * scale))
}

/// Adam moment buffers and hyperparameters for one net.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub(crate) m: Vec<LayerGrad>,
    pub(crate) v: Vec<LayerGrad>,
    pub(crate) t: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    /// Fresh state (zero moments, step 0) with standard defaults
    /// beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8.
    pub fn new(net: &FeedForwardNet, learning_rate: f64) -> Self {
        Self {
            m: zero_grads(net),
            v: zero_grads(net),
            t: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One bias-corrected Adam update over flat slices. Shared by net
/// training and the scalar temperature parameter elsewhere in the crate.
#[allow(clippy::too_many_arguments)]
pub(crate) fn adam_update_slice(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    t: u64,
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
) {
    debug_assert!(t >= 1);
    let bc1 = 1.0 - beta1.powi(t as i32);
    let bc2 = 1.0 - beta2.powi(t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + epsilon);
    }
}

/// Applies one Adam step to the net in place.
pub fn adam_step(
    net: &mut FeedForwardNet,
    grads: &[LayerGrad],
    state: &mut AdamState,
) -> Result<()> {
    if grads.len() != net.layers().len() {
        return Err(Error::DimensionMismatch {
            context: "gradient layers",
            expected: net.layers().len(),
            actual: grads.len(),
        });
    }
    state.t += 1;
    let (lr, b1, b2, eps, t) = (
        state.learning_rate,
        state.beta1,
        state.beta2,
        state.epsilon,
        state.t,
    );
    for (l, layer) in net.layers_mut().iter_mut().enumerate() {
        adam_update_slice(
            &mut layer.weights,
            &grads[l].weights,
            &mut state.m[l].weights,
            &mut state.v[l].weights,
            t,
            lr,
            b1,
            b2,
            eps,
        );
        adam_update_slice(
            &mut layer.bias,
            &grads[l].bias,
            &mut state.m[l].bias,
            &mut state.v[l].bias,
            t,
            lr,
            b1,
            b2,
            eps,
        );
    }
    Ok(())
}

/// Epochs, batching, learning rate, and shuffle seed for one training
/// run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1000,
            batch_size: 256,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

/// Trains the net in place by mini-batch Adam on the auxiliary-class
/// loss, re-shuffling each epoch with a seeded generator. Returns the
/// per-epoch mean training loss. Aborts with a diagnostic if the loss or
/// any activation stops being finite.
pub fn train(
    net: &mut FeedForwardNet,
    data: &[(Vec<f64>, Vec<f64>)],
    loss_cfg: &LossConfig,
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(Error::InvalidInput(
            "cannot train on an empty dataset".into(),
        ));
    }
    if cfg.batch_size == 0 {
        return Err(Error::InvalidInput("batch size must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = AdamState::new(net, cfg.learning_rate);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (batch_no, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let (grads, mean_loss) =
                backward_indexed(net, data, chunk, loss_cfg).map_err(|e| match e {
                    // Non-finite activations surface as softmax input
                    // errors mid-training; report them as divergence.
                    Error::InvalidInput(msg) => Error::Diverged {
                        epoch,
                        batch: batch_no,
                        msg,
                    },
                    other => other,
                })?;
            if !mean_loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: batch_no,
                    msg: format!("mean batch loss is {mean_loss}"),
                });
            }
            epoch_loss += mean_loss * chunk.len() as f64;
            adam_step(net, &grads, &mut state)?;
        }
        trace.push(epoch_loss / data.len() as f64);
    }
    Ok(trace)
}

pub const NET_FORMAT_VERSION: u32 = 1;

/// On-disk form of a trained net: layer dimensions, row-major weights,
/// the loss it was trained under, and a format version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetModelFile {
    pub format_version: u32,
    pub layers: Vec<DenseLayer>,
    pub loss: LossConfig,
}

/// Saves a net and its loss configuration as JSON.
pub fn save_net(path: &Path, net: &FeedForwardNet, loss: &LossConfig) -> Result<()> {
    let file = NetModelFile {
        format_version: NET_FORMAT_VERSION,
        layers: net.layers().to_vec(),
        loss: *loss,
    };
    let w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(w, &file)?;
    Ok(())
}

/// Loads a net saved by [`save_net`], re-validating dimensions.
pub fn load_net(path: &Path) -> Result<(FeedForwardNet, LossConfig)> {
    let r = BufReader::new(File::open(path)?);
    let file: NetModelFile = serde_json::from_reader(r)?;
    if file.format_version != NET_FORMAT_VERSION {
        return Err(Error::FormatVersion {
            found: file.format_version,
            supported: NET_FORMAT_VERSION,
        });
    }
    file.loss.validate()?;
    Ok((FeedForwardNet::from_layers(file.layers)?, file.loss))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    /// Central finite differences of the mean batch loss, the oracle for
    /// every gradient assertion.
    fn numeric_gradient(
        net: &FeedForwardNet,
        batch: &[(Vec<f64>, Vec<f64>)],
        cfg: &LossConfig,
        h: f64,
    ) -> Vec<f64> {
        let mean_loss = |n: &FeedForwardNet| -> f64 {
            batch
                .iter()
                .map(|(x, w)| {
                    let mu = softmax(&n.forward(x).unwrap()).unwrap();
                    ccac_loss(&mu, w, cfg)
                })
                .sum::<f64>()
                / batch.len() as f64
        };
        let base = net.params();
        let mut grad = Vec::with_capacity(base.len());
        for i in 0..base.len() {
            let mut plus = net.clone();
            let mut minus = net.clone();
            let mut p = base.clone();
            p[i] = base[i] + h;
            plus.set_params(&p).unwrap();
            p[i] = base[i] - h;
            minus.set_params(&p).unwrap();
            grad.push((mean_loss(&plus) - mean_loss(&minus)) / (2.0 * h));
        }
        grad
    }

    fn flatten(grads: &[LayerGrad]) -> Vec<f64> {
        let mut out = Vec::new();
        for g in grads {
            out.extend_from_slice(&g.weights);
            out.extend_from_slice(&g.bias);
        }
        out
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / f64::max(1e-8, a.abs() + b.abs())
    }

    /// Smallest |pre-activation| over all hidden units and samples.
    /// Finite differences are only a valid oracle when no ReLU kink sits
    /// within the perturbation's reach, so FD-based tests skip batches
    /// where this margin is tiny.
    fn min_hidden_margin(net: &FeedForwardNet, batch: &[(Vec<f64>, Vec<f64>)]) -> f64 {
        let mut margin = f64::INFINITY;
        for (x, _) in batch {
            let mut cur = x.clone();
            for (i, layer) in net.layers().iter().enumerate() {
                let mut next = vec![0.0; layer.output_dim];
                for (r, slot) in next.iter_mut().enumerate() {
                    let row = &layer.weights[r * layer.input_dim..(r + 1) * layer.input_dim];
                    let mut acc = layer.bias[r];
                    for (w, v) in row.iter().zip(&cur) {
                        acc += w * v;
                    }
                    *slot = acc;
                }
                if i + 1 < net.layers().len() {
                    for v in &mut next {
                        margin = margin.min(v.abs());
                        *v = v.max(0.0);
                    }
                }
                cur = next;
            }
        }
        margin
    }

    #[test]
    fn forward_zero_net() {
        let net = FeedForwardNet::zeros(&[3, 4, 2]).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn forward_identity_single_layer() {
        let net = FeedForwardNet::from_layers(vec![DenseLayer {
            input_dim: 2,
            output_dim: 2,
            weights: vec![1.0, 0.0, 0.0, 1.0],
            bias: vec![0.0, 0.0],
        }])
        .unwrap();
        // Single layer means no ReLU: negatives pass through.
        assert_eq!(net.forward(&[1.0, -2.0]).unwrap(), vec![1.0, -2.0]);
    }

    #[test]
    fn forward_relu_masks_hidden() {
        // Hidden layer computes [-1, 2] -> ReLU [0, 2]; output sums them.
        let net = FeedForwardNet::from_layers(vec![
            DenseLayer {
                input_dim: 1,
                output_dim: 2,
                weights: vec![-1.0, 2.0],
                bias: vec![0.0, 0.0],
            },
            DenseLayer {
                input_dim: 2,
                output_dim: 1,
                weights: vec![1.0, 1.0],
                bias: vec![0.0],
            },
        ])
        .unwrap();
        assert_eq!(net.forward(&[1.0]).unwrap(), vec![2.0]);
    }

    #[test]
    fn forward_dim_mismatch() {
        let net = FeedForwardNet::zeros(&[3, 2]).unwrap();
        assert!(matches!(
            net.forward(&[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn loss_perfect_prediction_is_tiny() {
        let cfg = LossConfig::cross_entropy();
        let mu = [1.0, 0.0, 0.0];
        let w = [1.0, 0.0, 0.0];
        assert!(ccac_loss(&mu, &w, &cfg) <= 1e-9);
    }

    #[test]
    fn loss_misclassified_example() {
        // w on the auxiliary class, mu_A = e^-1, lambda2 = 2: loss 2.
        let cfg = LossConfig::new(0.0, 2.0).unwrap();
        let mu_a = (-1.0f64).exp();
        let rest = (1.0 - mu_a) / 2.0;
        let mu = [rest, rest, mu_a];
        let w = [0.0, 0.0, 1.0];
        assert!((ccac_loss(&mu, &w, &cfg) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn loss_lambda1_penalizes_aux_mass() {
        // Correct sample (w on class 0) with auxiliary mass 0.5:
        // lambda1 = 1 adds -ln(0.5).
        let base = LossConfig::new(0.0, 1.0).unwrap();
        let with_aux = LossConfig::new(1.0, 1.0).unwrap();
        let mu = [0.4, 0.1, 0.5];
        let w = [1.0, 0.0, 0.0];
        let diff = ccac_loss(&mu, &w, &with_aux) - ccac_loss(&mu, &w, &base);
        assert!((diff - (-(0.5f64.ln()))).abs() < 1e-12);
    }

    #[test]
    fn loss_config_rejects_negative() {
        assert!(LossConfig::new(-0.5, 1.0).is_err());
        assert!(LossConfig::new(0.0, f64::NAN).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let cfg = LossConfig::new(0.5, 1.5).unwrap();
        let net = FeedForwardNet::glorot_uniform(&[3, 4, 3], 11).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let batch: Vec<(Vec<f64>, Vec<f64>)> = (0..5)
            .map(|_| {
                let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let mut w = vec![0.0; 3];
                w[rng.gen_range(0..3)] = 1.0;
                (x, w)
            })
            .collect();
        assert!(
            min_hidden_margin(&net, &batch) > 1e-3,
            "batch sits on a ReLU kink"
        );
        let analytic = flatten(&backward(&net, &batch, &cfg).unwrap());
        let numeric = numeric_gradient(&net, &batch, &cfg, 1e-5);
        for (a, n) in analytic.iter().zip(&numeric) {
            assert!(rel_err(*a, *n) < 1e-4, "analytic {a} vs numeric {n}");
        }
    }

    #[test]
    fn gradient_zero_at_clamped_perfect_prediction() {
        // Output logit 60 for the true class drives mu past the clamp;
        // with lambda1 = 0 nothing else is active, so the gradient
        // vanishes.
        let mut net = FeedForwardNet::zeros(&[2, 3]).unwrap();
        net.layers_mut()[0].bias = vec![60.0, 0.0, 0.0];
        let cfg = LossConfig::new(0.0, 1.0).unwrap();
        let batch = vec![(vec![0.3, -0.4], vec![1.0, 0.0, 0.0])];
        let grads = flatten(&backward(&net, &batch, &cfg).unwrap());
        assert!(grads.iter().all(|g| g.abs() < 1e-15), "{grads:?}");
    }

    #[test]
    fn gradient_scales_linearly_in_lambda2() {
        // For an auxiliary-labeled sample only the lambda2 term is
        // active, so the whole gradient is proportional to lambda2.
        let net = FeedForwardNet::glorot_uniform(&[2, 4, 3], 3).unwrap();
        let batch = vec![(vec![0.7, -1.1], vec![0.0, 0.0, 1.0])];
        let g1 = flatten(&backward(&net, &batch, &LossConfig::new(0.0, 1.0).unwrap()).unwrap());
        let g2 = flatten(&backward(&net, &batch, &LossConfig::new(0.0, 2.0).unwrap()).unwrap());
        for (a, b) in g1.iter().zip(&g2) {
            assert!((2.0 * a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn adam_zero_gradient_is_noop() {
        let mut net = FeedForwardNet::glorot_uniform(&[2, 3], 1).unwrap();
        let before = net.clone();
        let mut state = AdamState::new(&net, 1e-3);
        let grads = zero_grads(&net);
        adam_step(&mut net, &grads, &mut state).unwrap();
        assert_eq!(net, before);
    }

    #[test]
    fn adam_first_step_magnitude() {
        // With bias correction the first step has magnitude
        // lr * |g| / (|g| + eps) ~= lr.
        let mut net = FeedForwardNet::zeros(&[1, 1]).unwrap();
        let mut state = AdamState::new(&net, 1e-3);
        let mut grads = zero_grads(&net);
        grads[0].weights[0] = 0.37;
        grads[0].bias[0] = -4.2;
        adam_step(&mut net, &grads, &mut state).unwrap();
        let w = net.layers()[0].weights[0];
        let b = net.layers()[0].bias[0];
        assert!(w < 0.0 && b > 0.0, "steps oppose gradients");
        assert!((w.abs() - 1e-3).abs() < 1e-6);
        assert!((b.abs() - 1e-3).abs() < 1e-6);
    }

    #[test]
    fn adam_deterministic() {
        let run = || {
            let mut net = FeedForwardNet::glorot_uniform(&[2, 3, 2], 9).unwrap();
            let mut state = AdamState::new(&net, 1e-2);
            for step in 0..10 {
                let mut grads = zero_grads(&net);
                for (i, g) in grads[0].weights.iter_mut().enumerate() {
                    *g = ((step + i) as f64).sin();
                }
                adam_step(&mut net, &grads, &mut state).unwrap();
            }
            net
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn train_reduces_loss_on_separable_toy() {
        // Two well-separated Gaussian blobs, labels one-hot over 3
        // outputs (2 classes + never-used auxiliary slot).
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let data: Vec<(Vec<f64>, Vec<f64>)> = (0..200)
            .map(|i| {
                let class = i % 2;
                let center = if class == 0 { 2.0 } else { -2.0 };
                let x = vec![
                    center + rng.gen_range(-0.5..0.5),
                    -center + rng.gen_range(-0.5..0.5),
                ];
                let mut w = vec![0.0; 3];
                w[class] = 1.0;
                (x, w)
            })
            .collect();
        let mut net = FeedForwardNet::glorot_uniform(&[2, 8, 3], 0).unwrap();
        let trace = train(
            &mut net,
            &data,
            &LossConfig::cross_entropy(),
            &TrainConfig {
                epochs: 200,
                batch_size: 32,
                learning_rate: 1e-2,
                seed: 1,
            },
        )
        .unwrap();
        assert_eq!(trace.len(), 200);
        let first = trace[0];
        let last = *trace.last().unwrap();
        assert!(
            last <= 0.1 * first,
            "loss should drop by 90%: first {first}, last {last}"
        );
    }

    #[test]
    fn train_zero_epochs_is_noop() {
        let mut net = FeedForwardNet::glorot_uniform(&[2, 3], 7).unwrap();
        let before = net.clone();
        let data = vec![(vec![1.0, 2.0], vec![1.0, 0.0, 0.0])];
        let trace = train(
            &mut net,
            &data,
            &LossConfig::cross_entropy(),
            &TrainConfig {
                epochs: 0,
                ..TrainConfig::default()
            },
        )
        .unwrap();
        assert!(trace.is_empty());
        assert_eq!(net, before);
    }

    #[test]
    fn train_bit_deterministic() {
        let data: Vec<(Vec<f64>, Vec<f64>)> = (0..50)
            .map(|i| {
                let x = vec![(i as f64).sin(), (i as f64).cos()];
                let mut w = vec![0.0; 3];
                w[i % 3] = 1.0;
                (x, w)
            })
            .collect();
        let cfg = TrainConfig {
            epochs: 20,
            batch_size: 16,
            learning_rate: 1e-3,
            seed: 123,
        };
        let run = || {
            let mut net = FeedForwardNet::glorot_uniform(&[2, 5, 3], 77).unwrap();
            let trace = train(&mut net, &data, &LossConfig::new(1.0, 1.0).unwrap(), &cfg).unwrap();
            (net, trace)
        };
        let (n1, t1) = run();
        let (n2, t2) = run();
        assert_eq!(n1, n2);
        assert_eq!(t1, t2);
    }

    #[test]
    fn train_aborts_on_non_finite() {
        let mut net = FeedForwardNet::glorot_uniform(&[2, 3], 7).unwrap();
        net.layers_mut()[0].weights[0] = f64::NAN;
        let data = vec![(vec![1.0, 2.0], vec![1.0, 0.0, 0.0])];
        let result = train(
            &mut net,
            &data,
            &LossConfig::cross_entropy(),
            &TrainConfig {
                epochs: 1,
                ..TrainConfig::default()
            },
        );
        assert!(
            matches!(result, Err(Error::Diverged { epoch: 0, .. })),
            "{result:?}"
        );
    }

    #[test]
    fn glorot_bounds_and_determinism() {
        let a = FeedForwardNet::glorot_uniform(&[10, 50, 20, 11], 5).unwrap();
        let b = FeedForwardNet::glorot_uniform(&[10, 50, 20, 11], 5).unwrap();
        let c = FeedForwardNet::glorot_uniform(&[10, 50, 20, 11], 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        for layer in a.layers() {
            let bound = (6.0 / (layer.input_dim + layer.output_dim) as f64).sqrt();
            assert!(layer.weights.iter().all(|w| w.abs() <= bound));
            assert!(layer.bias.iter().all(|b| *b == 0.0));
        }
    }

    #[test]
    fn zero_hidden_layer_config() {
        let net = FeedForwardNet::glorot_uniform(&[4, 5], 3).unwrap();
        assert_eq!(net.input_dim(), 4);
        assert_eq!(net.output_dim(), 5);
        assert_eq!(net.layers().len(), 1);
        assert!(net.forward(&[0.1, 0.2, 0.3, 0.4]).is_ok());
    }

    #[test]
    fn params_round_trip() {
        let net = FeedForwardNet::glorot_uniform(&[3, 4, 2], 8).unwrap();
        let flat = net.params();
        assert_eq!(flat.len(), net.num_params());
        let mut other = FeedForwardNet::zeros(&[3, 4, 2]).unwrap();
        other.set_params(&flat).unwrap();
        assert_eq!(net, other);
        assert!(other.set_params(&flat[1..]).is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.json");
        let net = FeedForwardNet::glorot_uniform(&[3, 6, 4], 21).unwrap();
        let loss = LossConfig::new(0.5, 2.0).unwrap();
        save_net(&path, &net, &loss).unwrap();
        let (back, loss_back) = load_net(&path).unwrap();
        assert_eq!(net, back);
        assert_eq!(loss, loss_back);
    }

    #[test]
    fn load_rejects_bad_version_and_shape() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.json");
        let net = FeedForwardNet::glorot_uniform(&[2, 3], 1).unwrap();
        save_net(&path, &net, &LossConfig::cross_entropy()).unwrap();

        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(
            &path,
            text.replace("\"format_version\": 1", "\"format_version\": 99"),
        )
        .unwrap();
        assert!(matches!(
            load_net(&path),
            Err(Error::FormatVersion { found: 99, .. })
        ));

        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(
            &path,
            text.replace("\"format_version\": 99", "\"format_version\": 1")
                .replace("\"input_dim\": 2", "\"input_dim\": 5"),
        )
        .unwrap();
        assert!(load_net(&path).is_err());
    }

    #[test]
    fn net_validation_rejects_bad_chains() {
        let l1 = DenseLayer::zeros(2, 3);
        let l2 = DenseLayer::zeros(4, 1);
        assert!(FeedForwardNet::from_layers(vec![l1, l2]).is_err());
        assert!(FeedForwardNet::from_layers(vec![]).is_err());
        assert!(FeedForwardNet::zeros(&[3]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn gradients_match_fd_on_random_nets(
            seed in 0u64..500,
            hidden in 0usize..3,
            l1 in 0.0f64..2.0,
            l2 in 0.0f64..2.0,
        ) {
            let dims: Vec<usize> = match hidden {
                0 => vec![3, 4],
                1 => vec![3, 5, 4],
                _ => vec![2, 4, 3, 3],
            };
            let net = FeedForwardNet::glorot_uniform(&dims, seed).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xdead);
            let out = *dims.last().unwrap();
            let batch: Vec<(Vec<f64>, Vec<f64>)> = (0..3)
                .map(|_| {
                    let x: Vec<f64> =
                        (0..dims[0]).map(|_| rng.gen_range(-2.0..2.0)).collect();
                    let mut w = vec![0.0; out];
                    w[rng.gen_range(0..out)] = 1.0;
                    (x, w)
                })
                .collect();
            prop_assume!(min_hidden_margin(&net, &batch) > 1e-3);
            let cfg = LossConfig::new(l1, l2).unwrap();
            let analytic = flatten(&backward(&net, &batch, &cfg).unwrap());
            let numeric = numeric_gradient(&net, &batch, &cfg, 1e-5);
            for (a, n) in analytic.iter().zip(&numeric) {
                prop_assert!(rel_err(*a, *n) < 1e-4, "analytic {} vs numeric {}", a, n);
            }
        }

        #[test]
        fn loss_reduces_to_cross_entropy(
            raw in prop::collection::vec(0.05f64..1.0, 3..6),
            target in 0usize..6,
        ) {
            let sum: f64 = raw.iter().sum();
            let mu: Vec<f64> = raw.iter().map(|v| v / sum).collect();
            let mut w = vec![0.0; mu.len()];
            w[target % mu.len()] = 1.0;
            let cfg = LossConfig::cross_entropy();
            let plain: f64 = -mu
                .iter()
                .zip(&w)
                .map(|(m, wi)| wi * clamp_prob(*m, cfg.log_clamp).ln())
                .sum::<f64>();
            prop_assert!((ccac_loss(&mu, &w, &cfg) - plain).abs() <= 1e-12);
        }

        #[test]
        fn loss_nonnegative(
            raw in prop::collection::vec(0.05f64..1.0, 3..6),
            target in 0usize..6,
            l1 in 0.0f64..3.0,
            l2 in 0.0f64..3.0,
        ) {
            let sum: f64 = raw.iter().sum();
            let mu: Vec<f64> = raw.iter().map(|v| v / sum).collect();
            let mut w = vec![0.0; mu.len()];
            w[target % mu.len()] = 1.0;
            let cfg = LossConfig::new(l1, l2).unwrap();
            prop_assert!(ccac_loss(&mu, &w, &cfg) >= 0.0);
        }
    }
}
