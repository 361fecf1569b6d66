//! The auxiliary-class calibrators (CCAC, CCAC-S, and its transferred
//! form) plus the tagged model envelope shared with the baselines.
//!
//! CCAC maps the target classifier's K logits through a small net to K+1
//! probabilities, the extra class meaning "the target misclassified this
//! sample". CCAC-S instead scales the K logits by a learned temperature
//! and produces only the auxiliary logit with a net; transfer re-fits
//! nothing but that net's last layer and the temperature (K+2 scalars
//! for a penultimate width of K). The scalar confidence combines the
//! predicted class's probability with the auxiliary probability through
//! one of two geometric-mean rules; loss weights and the rule are chosen
//! by validation ECE.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{
    dirichlet_confidence, sb_confidence, ts_confidence, DirichletModel, ScalingBinningModel,
    TemperatureModel,
};
use crate::dataset::{assign_aux_labels, predict, softmax, CalibrationDataset};
use crate::error::{Error, Result};
use crate::metrics::{ece, EvalOutcome, SELECTION_BINS};
use crate::net::{
    adam_step, adam_update_slice, ccac_loss, loss_grad_wrt_logits, zero_grads, AdamState,
    FeedForwardNet, LossConfig, TrainConfig,
};
use crate::seeding::derive_seed;

/// How the (K+1)-class probabilities collapse into one confidence for
/// the target's predicted class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConfidenceRule {
    /// `1 - sqrt((1 - mu_yhat) * mu_aux)`
    GeoMeanComplement,
    /// `sqrt(mu_yhat * (1 - mu_aux))`
    GeoMeanProduct,
}

/// Both rules, in tie-break order.
pub const RULES: [ConfidenceRule; 2] = [
    ConfidenceRule::GeoMeanComplement,
    ConfidenceRule::GeoMeanProduct,
];

/// Collapses a (K+1)-probability vector and the target's predicted label
/// into a scalar confidence, clipped to [0, 1]. The prediction itself is
/// never altered; only its confidence is re-estimated.
pub fn combined_confidence(mu: &[f64], y_hat: usize, rule: ConfidenceRule) -> f64 {
    assert!(mu.len() >= 2, "need at least one real class plus auxiliary");
    assert!(y_hat < mu.len() - 1, "predicted label must be a real class");
    let mu_y = mu[y_hat];
    let mu_a = mu[mu.len() - 1];
    let c = match rule {
        ConfidenceRule::GeoMeanComplement => 1.0 - ((1.0 - mu_y) * mu_a).sqrt(),
        ConfidenceRule::GeoMeanProduct => (mu_y * (1.0 - mu_a)).sqrt(),
    };
    c.clamp(0.0, 1.0)
}

/// CCAC: one net from K logits to K+1 calibrated class logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CcacModel {
    pub k: usize,
    pub net: FeedForwardNet,
    pub loss: LossConfig,
    pub rule: ConfidenceRule,
}

impl CcacModel {
    pub fn new(
        k: usize,
        net: FeedForwardNet,
        loss: LossConfig,
        rule: ConfidenceRule,
    ) -> Result<Self> {
        let m = Self { k, net, loss, rule };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::InvalidInput("need at least two classes".into()));
        }
        self.net.validate()?;
        self.loss.validate()?;
        if self.net.input_dim() != self.k {
            return Err(Error::DimensionMismatch {
                context: "CCAC net input",
                expected: self.k,
                actual: self.net.input_dim(),
            });
        }
        if self.net.output_dim() != self.k + 1 {
            return Err(Error::DimensionMismatch {
                context: "CCAC net output",
                expected: self.k + 1,
                actual: self.net.output_dim(),
            });
        }
        Ok(())
    }
}

/// CCAC-S: temperature-scaled original logits merged with one
/// net-produced auxiliary logit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CcacSModel {
    pub k: usize,
    pub temperature: f64,
    pub aux_net: FeedForwardNet,
    pub loss: LossConfig,
    pub rule: ConfidenceRule,
}

impl CcacSModel {
    pub fn new(
        k: usize,
        temperature: f64,
        aux_net: FeedForwardNet,
        loss: LossConfig,
        rule: ConfidenceRule,
    ) -> Result<Self> {
        let m = Self {
            k,
            temperature,
            aux_net,
            loss,
            rule,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::InvalidInput("need at least two classes".into()));
        }
        if !self.temperature.is_finite() || self.temperature <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "temperature must be positive and finite, got {}",
                self.temperature
            )));
        }
        self.aux_net.validate()?;
        self.loss.validate()?;
        if self.aux_net.input_dim() != self.k {
            return Err(Error::DimensionMismatch {
                context: "auxiliary net input",
                expected: self.k,
                actual: self.aux_net.input_dim(),
            });
        }
        if self.aux_net.output_dim() != 1 {
            return Err(Error::DimensionMismatch {
                context: "auxiliary net output",
                expected: 1,
                actual: self.aux_net.output_dim(),
            });
        }
        Ok(())
    }
}

/// The calibrated (K+1)-class probabilities of a CCAC model.
pub fn ccac_probs(m: &CcacModel, z: &[f64]) -> Result<Vec<f64>> {
    if z.len() != m.k {
        return Err(Error::DimensionMismatch {
            context: "CCAC input logits",
            expected: m.k,
            actual: z.len(),
        });
    }
    softmax(&m.net.forward(z)?)
}

/// The calibrated (K+1)-class probabilities of a CCAC-S model:
/// `softmax([z / T, aux_net(z)])`.
pub fn ccacs_probs(m: &CcacSModel, z: &[f64]) -> Result<Vec<f64>> {
    m.validate()?;
    if z.len() != m.k {
        return Err(Error::DimensionMismatch {
            context: "CCAC-S input logits",
            expected: m.k,
            actual: z.len(),
        });
    }
    let mut merged: Vec<f64> = z.iter().map(|v| v / m.temperature).collect();
    merged.push(m.aux_net.forward(z)?[0]);
    softmax(&merged)
}

/// The loss-weight grid searched by `fit_ccac`/`fit_ccacs`; cells are
/// visited lambda1-major, in the given order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperGrid {
    pub lambda1_values: Vec<f64>,
    pub lambda2_values: Vec<f64>,
}

impl Default for HyperGrid {
    fn default() -> Self {
        Self {
            lambda1_values: vec![0.0, 0.5, 1.0, 2.0],
            lambda2_values: vec![0.0, 0.5, 1.0, 2.0],
        }
    }
}

impl HyperGrid {
    pub fn validate(&self) -> Result<()> {
        if self.lambda1_values.is_empty() || self.lambda2_values.is_empty() {
            return Err(Error::InvalidInput("hyperparameter grid is empty".into()));
        }
        for v in self.lambda1_values.iter().chain(&self.lambda2_values) {
            if !v.is_finite() || *v < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "loss weights must be finite and nonnegative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// What the validation search settled on; stored alongside every fitted
/// model for the record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
    pub rho: Option<f64>,
    pub rule: Option<ConfidenceRule>,
    pub val_ece: f64,
}

/// Per-record evaluation ingredients on a validation set: calibrated
/// probabilities, the target's prediction, and its correctness.
type ValPoint = (Vec<f64>, usize, bool);

fn val_points<M>(
    model: &M,
    ds: &CalibrationDataset,
    probs: impl Fn(&M, &[f64]) -> Result<Vec<f64>>,
) -> Result<Vec<ValPoint>> {
    ds.records()
        .iter()
        .map(|r| {
            let mu = probs(model, &r.logits)?;
            let (y_hat, _) = predict(&r.logits)?;
            Ok((mu, y_hat, r.label == Some(y_hat)))
        })
        .collect()
}

fn rule_ece(points: &[ValPoint], rule: ConfidenceRule) -> Result<f64> {
    let outcomes: Vec<EvalOutcome> = points
        .iter()
        .map(|(mu, y_hat, correct)| EvalOutcome {
            confidence: combined_confidence(mu, *y_hat, rule),
            correct: *correct,
        })
        .collect();
    ece(&outcomes, SELECTION_BINS)
}

/// Best rule for the given validation points, ties keeping rule order.
fn select_rule(points: &[ValPoint]) -> Result<(ConfidenceRule, f64)> {
    let mut best: Option<(ConfidenceRule, f64)> = None;
    for rule in RULES {
        let score = rule_ece(points, rule)?;
        if best.as_ref().is_none_or(|(_, b)| score < *b) {
            best = Some((rule, score));
        }
    }
    Ok(best.expect("RULES is nonempty"))
}

/// Shared grid scaffolding: fit one model per (lambda1, lambda2) cell,
/// score every (cell, rule) pair by validation ECE, and keep the
/// earliest strict winner (grid order, then rule order).
fn grid_search<M>(
    grid: &HyperGrid,
    mut fit_cell: impl FnMut(usize, LossConfig) -> Result<M>,
    val_points_of: impl Fn(&M) -> Result<Vec<ValPoint>>,
) -> Result<(M, ConfidenceRule, Selection)> {
    grid.validate()?;
    let mut best: Option<(M, ConfidenceRule, Selection)> = None;
    let mut cell = 0;
    for &l1 in &grid.lambda1_values {
        for &l2 in &grid.lambda2_values {
            let loss = LossConfig::new(l1, l2)?;
            let model = fit_cell(cell, loss)?;
            let points = val_points_of(&model)?;
            let (rule, score) = select_rule(&points)?;
            if best.as_ref().is_none_or(|(_, _, s)| score < s.val_ece) {
                best = Some((
                    model,
                    rule,
                    Selection {
                        lambda1: Some(l1),
                        lambda2: Some(l2),
                        rho: None,
                        rule: Some(rule),
                        val_ece: score,
                    },
                ));
            }
            cell += 1;
        }
    }
    Ok(best.expect("grid validated nonempty"))
}

fn check_split_pair(train: &CalibrationDataset, val: &CalibrationDataset) -> Result<()> {
    if train.k() != val.k() {
        return Err(Error::DimensionMismatch {
            context: "train/val class counts",
            expected: train.k(),
            actual: val.k(),
        });
    }
    if train.is_empty() {
        return Err(Error::Fit("cannot fit on an empty training set".into()));
    }
    if val.is_empty() {
        return Err(Error::Fit(
            "cannot select on an empty validation set".into(),
        ));
    }
    Ok(())
}

fn aux_pairs(ds: &CalibrationDataset) -> Vec<(Vec<f64>, Vec<f64>)> {
    assign_aux_labels(ds)
        .into_iter()
        .map(|r| (r.logits, r.one_hot))
        .collect()
}

/// Fits CCAC: one net per grid cell (all cells share the same seeded
/// initialization; per-cell training streams are derived from the master
/// seed), selected with the confidence rule by validation ECE.
/// `hidden` gives the net's hidden-layer widths.
pub fn fit_ccac(
    train: &CalibrationDataset,
    val: &CalibrationDataset,
    grid: &HyperGrid,
    hidden: &[usize],
    cfg: &TrainConfig,
) -> Result<(CcacModel, Selection)> {
    check_split_pair(train, val)?;
    let k = train.k();
    let mut dims = Vec::with_capacity(hidden.len() + 2);
    dims.push(k);
    dims.extend_from_slice(hidden);
    dims.push(k + 1);
    let pairs = aux_pairs(train);
    let init_seed = derive_seed(cfg.seed, "ccac-init");
    let (mut model, rule, selection) = grid_search(
        grid,
        |cell, loss| {
            let mut net = FeedForwardNet::glorot_uniform(&dims, init_seed)?;
            let cell_cfg = TrainConfig {
                seed: derive_seed(cfg.seed, &format!("ccac-cell-{cell}")),
                ..cfg.clone()
            };
            crate::net::train(&mut net, &pairs, &loss, &cell_cfg)?;
            CcacModel::new(k, net, loss, ConfidenceRule::GeoMeanComplement)
        },
        |m| val_points(m, val, ccac_probs),
    )?;
    model.rule = rule;
    Ok((model, selection))
}

/// Fits CCAC-S: per grid cell, the temperature (initialized at 1) and
/// the auxiliary net are trained jointly; rule and cell selected by
/// validation ECE. `aux_hidden` gives the auxiliary net's hidden widths.
pub fn fit_ccacs(
    train: &CalibrationDataset,
    val: &CalibrationDataset,
    grid: &HyperGrid,
    aux_hidden: &[usize],
    cfg: &TrainConfig,
) -> Result<(CcacSModel, Selection)> {
    check_split_pair(train, val)?;
    let k = train.k();
    let mut dims = Vec::with_capacity(aux_hidden.len() + 2);
    dims.push(k);
    dims.extend_from_slice(aux_hidden);
    dims.push(1);
    let pairs = aux_pairs(train);
    let init_seed = derive_seed(cfg.seed, "ccacs-init");
    let (mut model, rule, selection) = grid_search(
        grid,
        |cell, loss| {
            let aux_net = FeedForwardNet::glorot_uniform(&dims, init_seed)?;
            let mut m = CcacSModel::new(k, 1.0, aux_net, loss, ConfidenceRule::GeoMeanComplement)?;
            let cell_cfg = TrainConfig {
                seed: derive_seed(cfg.seed, &format!("ccacs-cell-{cell}")),
                ..cfg.clone()
            };
            train_ccacs(&mut m, &pairs, &cell_cfg)?;
            Ok(m)
        },
        |m| val_points(m, val, ccacs_probs),
    )?;
    model.rule = rule;
    Ok((model, selection))
}

/// Which CCAC-S parameters a training run may move.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TrainScope {
    /// Temperature and the whole auxiliary net.
    All,
    /// Temperature and the auxiliary net's final layer only; everything
    /// else stays bit-identical.
    TemperatureAndLastLayer,
}

/// Trains a CCAC-S model in place on `(logits, one-hot)` pairs by joint
/// Adam over the temperature (through its logarithm, keeping T > 0) and
/// the auxiliary net. Returns the per-epoch mean loss trace.
pub fn train_ccacs(
    model: &mut CcacSModel,
    data: &[(Vec<f64>, Vec<f64>)],
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    train_ccacs_scoped(model, data, cfg, TrainScope::All)
}

fn train_ccacs_scoped(
    model: &mut CcacSModel,
    data: &[(Vec<f64>, Vec<f64>)],
    cfg: &TrainConfig,
    scope: TrainScope,
) -> Result<Vec<f64>> {
    model.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidInput(
            "cannot train on an empty dataset".into(),
        ));
    }
    if cfg.batch_size == 0 {
        return Err(Error::InvalidInput("batch size must be at least 1".into()));
    }
    let k = model.k;
    for (x, w) in data {
        if x.len() != k || w.len() != k + 1 {
            return Err(Error::DimensionMismatch {
                context: "CCAC-S training pair",
                expected: k,
                actual: x.len(),
            });
        }
    }
    let mut tau = model.temperature.ln();
    let mut state = AdamState::new(&model.aux_net, cfg.learning_rate);
    let (mut m_tau, mut v_tau) = (0.0, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    let last = model.aux_net.layers().len() - 1;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (batch_no, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let mut grads = zero_grads(&model.aux_net);
            let mut g_tau = 0.0;
            let mut loss_sum = 0.0;
            let inv_t = (-tau).exp();
            for &i in chunk {
                let (x, w) = &data[i];
                let acts = model.aux_net.forward_cached(x)?;
                let mut merged: Vec<f64> = x.iter().map(|z| z * inv_t).collect();
                merged.push(acts.last().expect("output")[0]);
                let mu = softmax(&merged).map_err(|e| match e {
                    Error::InvalidInput(msg) => Error::Diverged {
                        epoch,
                        batch: batch_no,
                        msg,
                    },
                    other => other,
                })?;
                loss_sum += ccac_loss(&mu, w, &model.loss);
                let g_o = loss_grad_wrt_logits(&mu, w, &model.loss);
                // o_i = z_i e^{-tau} for the K scaled logits, so
                // d o_i / d tau = -o_i and the aux logit is tau-free.
                g_tau -= g_o[..k]
                    .iter()
                    .zip(&merged)
                    .map(|(g, o)| g * o)
                    .sum::<f64>();
                model.aux_net.accumulate_grads(&acts, &[g_o[k]], &mut grads);
            }
            let scale = 1.0 / chunk.len() as f64;
            g_tau *= scale;
            for g in &mut grads {
                g.weights.iter_mut().for_each(|v| *v *= scale);
                g.bias.iter_mut().for_each(|v| *v *= scale);
            }
            let mean_loss = loss_sum * scale;
            if !mean_loss.is_finite() || !g_tau.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: batch_no,
                    msg: format!("mean batch loss {mean_loss}, temperature gradient {g_tau}"),
                });
            }
            epoch_loss += mean_loss * chunk.len() as f64;
            match scope {
                TrainScope::All => adam_step(&mut model.aux_net, &grads, &mut state)?,
                TrainScope::TemperatureAndLastLayer => {
                    // Frozen layers are never written, keeping them
                    // bit-identical; only the final layer updates.
                    state.t += 1;
                    let layer = &mut model.aux_net.layers_mut()[last];
                    adam_update_slice(
                        &mut layer.weights,
                        &grads[last].weights,
                        &mut state.m[last].weights,
                        &mut state.v[last].weights,
                        state.t,
                        cfg.learning_rate,
                        state.beta1,
                        state.beta2,
                        state.epsilon,
                    );
                    adam_update_slice(
                        &mut layer.bias,
                        &grads[last].bias,
                        &mut state.m[last].bias,
                        &mut state.v[last].bias,
                        state.t,
                        cfg.learning_rate,
                        state.beta1,
                        state.beta2,
                        state.epsilon,
                    );
                }
            }
            let mut tau_s = [tau];
            adam_update_slice(
                &mut tau_s,
                &[g_tau],
                std::slice::from_mut(&mut m_tau),
                std::slice::from_mut(&mut v_tau),
                state.t,
                cfg.learning_rate,
                state.beta1,
                state.beta2,
                state.epsilon,
            );
            tau = tau_s[0];
        }
        trace.push(epoch_loss / data.len() as f64);
    }
    if !tau.is_finite() {
        return Err(Error::Fit(format!(
            "temperature diverged (log-temperature {tau})"
        )));
    }
    model.temperature = tau.exp();
    Ok(trace)
}

/// Adapts a fitted CCAC-S model to a new domain from a handful of
/// labeled samples: only the temperature and the auxiliary net's last
/// layer are retrained (K+2 scalars when the penultimate width is K);
/// loss weights are inherited and the confidence rule is re-selected on
/// `small_val`. Returns the adapted model and its selection record.
pub fn transfer_ccacs(
    pretrained: &CcacSModel,
    small_train: &CalibrationDataset,
    small_val: &CalibrationDataset,
    cfg: &TrainConfig,
) -> Result<(CcacSModel, Selection)> {
    pretrained.validate()?;
    if small_train.k() != pretrained.k {
        return Err(Error::DimensionMismatch {
            context: "transfer train class count",
            expected: pretrained.k,
            actual: small_train.k(),
        });
    }
    check_split_pair(small_train, small_val)?;
    let mut model = pretrained.clone();
    let pairs = aux_pairs(small_train);
    train_ccacs_scoped(&mut model, &pairs, cfg, TrainScope::TemperatureAndLastLayer)?;
    let points = val_points(&model, small_val, ccacs_probs)?;
    let (rule, val_ece) = select_rule(&points)?;
    model.rule = rule;
    let selection = Selection {
        lambda1: Some(model.loss.lambda1),
        lambda2: Some(model.loss.lambda2),
        rho: None,
        rule: Some(rule),
        val_ece,
    };
    Ok((model, selection))
}

/// Any fitted calibrator, tagged by kind. This is the payload of the
/// model files the command layer writes and loads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CalibratorModel {
    /// Max probability: the uncalibrated softmax maximum.
    Mp {
        k: usize,
    },
    Ts {
        k: usize,
        model: TemperatureModel,
    },
    Sb {
        k: usize,
        model: ScalingBinningModel,
    },
    Dirichlet {
        model: DirichletModel,
    },
    Ccac {
        model: CcacModel,
    },
    CcacS {
        model: CcacSModel,
    },
    /// A transferred CCAC-S model; same shape, separate kind so reports
    /// distinguish it.
    CcacT {
        model: CcacSModel,
    },
}

impl CalibratorModel {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Mp { .. } => "mp",
            Self::Ts { .. } => "ts",
            Self::Sb { .. } => "sb",
            Self::Dirichlet { .. } => "dirichlet",
            Self::Ccac { .. } => "ccac",
            Self::CcacS { .. } => "ccac-s",
            Self::CcacT { .. } => "ccac-t",
        }
    }

    /// The class count the model expects.
    pub fn k(&self) -> usize {
        match self {
            Self::Mp { k } | Self::Ts { k, .. } | Self::Sb { k, .. } => *k,
            Self::Dirichlet { model } => model.k(),
            Self::Ccac { model } => model.k,
            Self::CcacS { model } | Self::CcacT { model } => model.k,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Mp { k } => {
                if *k < 2 {
                    return Err(Error::InvalidInput("need at least two classes".into()));
                }
                Ok(())
            }
            Self::Ts { k, model } => {
                if *k < 2 {
                    return Err(Error::InvalidInput("need at least two classes".into()));
                }
                model.validate()
            }
            Self::Sb { k, model } => {
                if *k < 2 {
                    return Err(Error::InvalidInput("need at least two classes".into()));
                }
                model.validate()
            }
            Self::Dirichlet { model } => model.validate(),
            Self::Ccac { model } => model.validate(),
            Self::CcacS { model } | Self::CcacT { model } => model.validate(),
        }
    }

    /// The calibrated confidence assigned to the target's prediction for
    /// one logit vector.
    pub fn confidence(&self, z: &[f64]) -> Result<f64> {
        let k = self.k();
        if z.len() != k {
            return Err(Error::DimensionMismatch {
                context: "calibrator input logits",
                expected: k,
                actual: z.len(),
            });
        }
        match self {
            Self::Mp { .. } => Ok(predict(z)?.1),
            Self::Ts { model, .. } => ts_confidence(model, z),
            Self::Sb { model, .. } => sb_confidence(model, z),
            Self::Dirichlet { model } => dirichlet_confidence(model, z),
            Self::Ccac { model } => {
                let mu = ccac_probs(model, z)?;
                Ok(combined_confidence(&mu, predict(z)?.0, model.rule))
            }
            Self::CcacS { model } | Self::CcacT { model } => {
                let mu = ccacs_probs(model, z)?;
                Ok(combined_confidence(&mu, predict(z)?.0, model.rule))
            }
        }
    }
}

/// Evaluates a calibrator over a dataset: per record, the calibrated
/// confidence and whether the target's argmax prediction was right
/// (NULL labels always count as wrong). Record order is preserved.
pub fn calibrated_confidences(
    model: &CalibratorModel,
    ds: &CalibrationDataset,
) -> Result<Vec<EvalOutcome>> {
    if ds.k() != model.k() {
        return Err(Error::DimensionMismatch {
            context: "calibrator/dataset class counts",
            expected: model.k(),
            actual: ds.k(),
        });
    }
    ds.records()
        .iter()
        .map(|r| {
            let (y_hat, _) = predict(&r.logits)?;
            Ok(EvalOutcome {
                confidence: model.confidence(&r.logits)?,
                correct: r.label == Some(y_hat),
            })
        })
        .collect()
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// On-disk envelope for a fitted calibrator: version, tagged model, and
/// the selection record when a search produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    #[serde(flatten)]
    pub model: CalibratorModel,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selection: Option<Selection>,
}

pub fn save_model_file(path: &Path, file: &ModelFile) -> Result<()> {
    file.model.validate()?;
    let w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(w, file)?;
    Ok(())
}

pub fn load_model_file(path: &Path) -> Result<ModelFile> {
    let r = BufReader::new(File::open(path)?);
    let file: ModelFile = serde_json::from_reader(r)?;
    if file.format_version != MODEL_FORMAT_VERSION {
        return Err(Error::FormatVersion {
            found: file.format_version,
            supported: MODEL_FORMAT_VERSION,
        });
    }
    file.model.validate()?;
    Ok(file)
}
