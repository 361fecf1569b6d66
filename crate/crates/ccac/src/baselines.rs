//! Baseline calibrators: temperature scaling, scaling-binning, and
//! Dirichlet calibration.
//!
//! (The fourth baseline, max probability, needs no parameters: its
//! confidence is [`crate::dataset::predict`]'s max softmax probability.)
//!
//! All fits are deterministic given their inputs and seeds. NULL-labeled
//! samples carry no target class, so they are excluded from every
//! likelihood fit; they still count as wrong outcomes wherever ECE
//! drives model selection.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{predict, softmax, CalibrationDataset, LogitRecord};
use crate::error::{Error, Result};
use crate::metrics::{ece, EvalOutcome, SELECTION_BINS};
use crate::net::{adam_update_slice, TrainConfig};

/// Temperature scaling: a single positive scalar dividing every logit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperatureModel {
    pub t: f64,
}

impl TemperatureModel {
    pub fn validate(&self) -> Result<()> {
        if !self.t.is_finite() || self.t <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "temperature must be positive and finite, got {}",
                self.t
            )));
        }
        Ok(())
    }
}

/// Search interval for the temperature fit.
pub const TEMPERATURE_RANGE: (f64, f64) = (0.05, 50.0);
const TEMPERATURE_TOL: f64 = 1e-4;

/// Golden-section minimization of a unimodal function on [lo, hi],
/// narrowing the bracket below `tol`.
fn golden_section_min(mut f: impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut c = hi - INV_PHI * (hi - lo);
    let mut d = lo + INV_PHI * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    while hi - lo > tol {
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - INV_PHI * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + INV_PHI * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}

fn labeled_records(ds: &CalibrationDataset) -> Vec<(&LogitRecord, usize)> {
    ds.records()
        .iter()
        .filter_map(|r| r.label.map(|y| (r, y)))
        .collect()
}

/// Mean negative log-likelihood of the labeled samples at temperature
/// `t`; probabilities are floored to keep the logarithm finite.
pub fn temperature_nll(ds: &CalibrationDataset, t: f64) -> Result<f64> {
    let labeled = labeled_records(ds);
    if labeled.is_empty() {
        return Err(Error::Fit(
            "temperature fit needs at least one labeled sample; all labels are NULL".into(),
        ));
    }
    let mut total = 0.0;
    for (r, y) in &labeled {
        let scaled: Vec<f64> = r.logits.iter().map(|z| z / t).collect();
        let p = softmax(&scaled)?;
        total -= p[*y].max(f64::MIN_POSITIVE).ln();
    }
    Ok(total / labeled.len() as f64)
}

/// Fits the temperature by golden-section search of the NLL over
/// [0.05, 50], to a bracket width below 1e-4. NULL-labeled samples are
/// skipped; a dataset with no labeled samples cannot be fitted.
pub fn fit_temperature(train: &CalibrationDataset) -> Result<TemperatureModel> {
    temperature_nll(train, 1.0)?;
    let (lo, hi) = TEMPERATURE_RANGE;
    let t = golden_section_min(
        |t| temperature_nll(train, t).expect("labeled samples checked above"),
        lo,
        hi,
        TEMPERATURE_TOL,
    );
    Ok(TemperatureModel { t })
}

/// Max softmax probability after temperature scaling. Scaling by a
/// positive temperature never changes the argmax.
pub fn ts_confidence(m: &TemperatureModel, z: &[f64]) -> Result<f64> {
    m.validate()?;
    let scaled: Vec<f64> = z.iter().map(|v| v / m.t).collect();
    Ok(predict(&scaled)?.1)
}

/// Scaling-binning: temperature scaling followed by equal-mass histogram
/// binning of the scaled confidences. `bin_edges` has one more entry
/// than `bin_values`; edges start at 0 and end at 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingBinningModel {
    pub temperature: f64,
    pub bin_edges: Vec<f64>,
    pub bin_values: Vec<f64>,
}

impl ScalingBinningModel {
    pub fn validate(&self) -> Result<()> {
        if !self.temperature.is_finite() || self.temperature <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "temperature must be positive and finite, got {}",
                self.temperature
            )));
        }
        if self.bin_values.is_empty() || self.bin_edges.len() != self.bin_values.len() + 1 {
            return Err(Error::InvalidInput(
                "bin edges must number exactly one more than bin values".into(),
            ));
        }
        if self.bin_edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::DegenerateBins(
                "bin edges are not strictly ascending".into(),
            ));
        }
        if self
            .bin_edges
            .iter()
            .chain(&self.bin_values)
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidInput(
                "bins contain a non-finite value".into(),
            ));
        }
        Ok(())
    }
}

/// Equal-mass binning of confidences: quantile edges (outer edges
/// clamped to 0 and 1) and per-bin mean confidence. Needs every bin to
/// be nonempty and the edges to be strictly ascending; too few distinct
/// confidences make that impossible.
pub fn fit_bins(confidences: &[f64], b: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if b == 0 {
        return Err(Error::InvalidInput("need at least one bin".into()));
    }
    if confidences.is_empty() {
        return Err(Error::Fit("binning needs at least one confidence".into()));
    }
    if confidences
        .iter()
        .any(|c| !c.is_finite() || *c < 0.0 || *c > 1.0)
    {
        return Err(Error::InvalidInput("confidences must lie in [0, 1]".into()));
    }
    let n = confidences.len();
    let mut sorted = confidences.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let mut edges = Vec::with_capacity(b + 1);
    edges.push(0.0);
    for j in 1..b {
        edges.push(sorted[j * n / b]);
    }
    edges.push(1.0);
    if edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::DegenerateBins(format!(
            "{b} equal-mass bins need {b} distinct interior quantiles; confidences are too repetitive"
        )));
    }
    let mut sums = vec![0.0; b];
    let mut counts = vec![0usize; b];
    for c in confidences {
        let i = bin_lookup(&edges, *c);
        sums[i] += c;
        counts[i] += 1;
    }
    if let Some(i) = counts.iter().position(|c| *c == 0) {
        return Err(Error::DegenerateBins(format!(
            "bin {i} of {b} received no samples"
        )));
    }
    let values = sums
        .iter()
        .zip(&counts)
        .map(|(s, c)| s / *c as f64)
        .collect();
    Ok((edges, values))
}

/// Bin index for a confidence: bin i covers [edges[i], edges[i+1]), the
/// last bin closed; out-of-range confidences clamp to the outer bins.
fn bin_lookup(edges: &[f64], c: f64) -> usize {
    edges[1..edges.len() - 1].partition_point(|e| *e <= c)
}

/// Fits scaling-binning with `b` bins: the temperature on the first half
/// of `train`, the bins on the scaled confidences of the second half.
pub fn fit_scaling_binning(train: &CalibrationDataset, b: usize) -> Result<ScalingBinningModel> {
    let n = train.len();
    if n < 2 {
        return Err(Error::Fit(format!(
            "scaling-binning needs at least 2 samples (one per half), got {n}"
        )));
    }
    let half = n / 2;
    let first = CalibrationDataset::new(train.k(), train.records()[..half].to_vec())?;
    let temp = fit_temperature(&first)?;
    let confidences: Vec<f64> = train.records()[half..]
        .iter()
        .map(|r| ts_confidence(&temp, &r.logits))
        .collect::<Result<_>>()?;
    let (bin_edges, bin_values) = fit_bins(&confidences, b)?;
    Ok(ScalingBinningModel {
        temperature: temp.t,
        bin_edges,
        bin_values,
    })
}

/// The scaled confidence of `z`, replaced by its bin's stored mean.
pub fn sb_confidence(m: &ScalingBinningModel, z: &[f64]) -> Result<f64> {
    m.validate()?;
    let conf = ts_confidence(&TemperatureModel { t: m.temperature }, z)?;
    Ok(m.bin_values[bin_lookup(&m.bin_edges, conf)])
}

/// Dirichlet calibration: probabilities are re-mapped through
/// `softmax(W ln p + b)` with a full K-by-K matrix `W` (row-major rows)
/// and bias `b`. `rho` records the off-diagonal regularization weight
/// the model was fitted with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirichletModel {
    pub w: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub rho: f64,
}

impl DirichletModel {
    /// The identity map: `dirichlet_probs` reproduces `softmax(z)`.
    pub fn identity(k: usize, rho: f64) -> Self {
        let mut w = vec![vec![0.0; k]; k];
        for (i, row) in w.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        Self {
            w,
            b: vec![0.0; k],
            rho,
        }
    }

    pub fn k(&self) -> usize {
        self.b.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.b.len();
        if k < 2 || self.w.len() != k || self.w.iter().any(|row| row.len() != k) {
            return Err(Error::InvalidInput(
                "Dirichlet parameters must form a square K x K matrix and length-K bias, K >= 2"
                    .into(),
            ));
        }
        if !self.rho.is_finite() || self.rho < 0.0 {
            return Err(Error::InvalidInput(
                "regularization weight must be finite and nonnegative".into(),
            ));
        }
        if self
            .w
            .iter()
            .flatten()
            .chain(&self.b)
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidInput(
                "Dirichlet parameters contain a non-finite value".into(),
            ));
        }
        Ok(())
    }
}

const DIRICHLET_LOG_CLAMP: f64 = 1e-12;

fn log_probs(z: &[f64]) -> Result<Vec<f64>> {
    let p = softmax(z)?;
    Ok(p.iter().map(|v| v.max(DIRICHLET_LOG_CLAMP).ln()).collect())
}

/// The calibrated probability vector `softmax(W ln softmax(z) + b)`,
/// with the inner probabilities floored at 1e-12 before the logarithm.
pub fn dirichlet_probs(m: &DirichletModel, z: &[f64]) -> Result<Vec<f64>> {
    m.validate()?;
    let k = m.k();
    if z.len() != k {
        return Err(Error::DimensionMismatch {
            context: "Dirichlet input logits",
            expected: k,
            actual: z.len(),
        });
    }
    let lp = log_probs(z)?;
    let u: Vec<f64> =
        m.w.iter()
            .zip(&m.b)
            .map(|(row, bi)| bi + row.iter().zip(&lp).map(|(w, l)| w * l).sum::<f64>())
            .collect();
    softmax(&u)
}

/// Max calibrated probability.
pub fn dirichlet_confidence(m: &DirichletModel, z: &[f64]) -> Result<f64> {
    let p = dirichlet_probs(m, z)?;
    Ok(p.iter().fold(f64::NEG_INFINITY, |a, b| a.max(*b)))
}

/// Trains (W, b) for one fixed `rho` by mini-batch Adam on the NLL of
/// the labeled samples plus `rho * sum of squared off-diagonals`.
fn train_dirichlet(
    k: usize,
    samples: &[(Vec<f64>, usize)],
    rho: f64,
    cfg: &TrainConfig,
) -> Result<DirichletModel> {
    // Parameters flattened as K*K row-major weights then K biases.
    let n_params = k * k + k;
    let mut params = vec![0.0; n_params];
    for i in 0..k {
        params[i * k + i] = 1.0;
    }
    let mut m = vec![0.0; n_params];
    let mut v = vec![0.0; n_params];
    let mut t = 0u64;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut grad = vec![0.0; n_params];
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &idx in chunk {
                let (lp, y) = &samples[idx];
                let u: Vec<f64> = (0..k)
                    .map(|i| {
                        params[k * k + i]
                            + params[i * k..(i + 1) * k]
                                .iter()
                                .zip(lp)
                                .map(|(w, l)| w * l)
                                .sum::<f64>()
                    })
                    .collect();
                let p = softmax(&u)?;
                for i in 0..k {
                    let delta = p[i] - if i == *y { 1.0 } else { 0.0 };
                    for (g, l) in grad[i * k..(i + 1) * k].iter_mut().zip(lp) {
                        *g += delta * l;
                    }
                    grad[k * k + i] += delta;
                }
            }
            let scale = 1.0 / chunk.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            if rho > 0.0 {
                for i in 0..k {
                    for j in 0..k {
                        if i != j {
                            grad[i * k + j] += 2.0 * rho * params[i * k + j];
                        }
                    }
                }
            }
            t += 1;
            adam_update_slice(
                &mut params,
                &grad,
                &mut m,
                &mut v,
                t,
                cfg.learning_rate,
                0.9,
                0.999,
                1e-8,
            );
        }
    }
    let w = (0..k)
        .map(|i| params[i * k..(i + 1) * k].to_vec())
        .collect();
    let model = DirichletModel {
        w,
        b: params[k * k..].to_vec(),
        rho,
    };
    model
        .validate()
        .map_err(|_| Error::Fit("Dirichlet training produced non-finite parameters".into()))?;
    Ok(model)
}

fn dirichlet_val_ece(m: &DirichletModel, val: &CalibrationDataset) -> Result<f64> {
    let outcomes: Vec<EvalOutcome> = val
        .records()
        .iter()
        .map(|r| {
            let conf = dirichlet_confidence(m, &r.logits)?;
            let (y_hat, _) = predict(&r.logits)?;
            Ok(EvalOutcome {
                confidence: conf,
                correct: r.label == Some(y_hat),
            })
        })
        .collect::<Result<_>>()?;
    ece(&outcomes, SELECTION_BINS)
}

/// Fits Dirichlet calibration: for every `rho` in the grid (in order),
/// trains (W, b) from the identity by Adam on NLL plus the off-diagonal
/// penalty, then keeps the `rho` with the smallest validation ECE (ties
/// keep the earliest grid entry). NULL-labeled samples are excluded from
/// the NLL but count as wrong in the validation ECE. Returns the model
/// and its validation ECE.
pub fn fit_dirichlet(
    train: &CalibrationDataset,
    val: &CalibrationDataset,
    rho_grid: &[f64],
    cfg: &TrainConfig,
) -> Result<(DirichletModel, f64)> {
    if rho_grid.is_empty() {
        return Err(Error::InvalidInput("empty regularization grid".into()));
    }
    if rho_grid.iter().any(|r| !r.is_finite() || *r < 0.0) {
        return Err(Error::InvalidInput(
            "regularization weights must be finite and nonnegative".into(),
        ));
    }
    if train.k() != val.k() {
        return Err(Error::DimensionMismatch {
            context: "train/val class counts",
            expected: train.k(),
            actual: val.k(),
        });
    }
    let k = train.k();
    let samples: Vec<(Vec<f64>, usize)> = train
        .records()
        .iter()
        .filter_map(|r| r.label.map(|y| (r, y)))
        .map(|(r, y)| Ok((log_probs(&r.logits)?, y)))
        .collect::<Result<_>>()?;
    if samples.is_empty() {
        return Err(Error::Fit(
            "Dirichlet fit needs at least one labeled sample; all labels are NULL".into(),
        ));
    }
    let mut best: Option<(DirichletModel, f64)> = None;
    for &rho in rho_grid {
        let model = train_dirichlet(k, &samples, rho, cfg)?;
        let score = dirichlet_val_ece(&model, val)?;
        if best.as_ref().is_none_or(|(_, b)| score < *b) {
            best = Some((model, score));
        }
    }
    Ok(best.expect("nonempty grid"))
}
