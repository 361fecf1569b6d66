//! Seeded synthetic logit generation covering three regimes: separable
//! in-distribution samples, a shifted block with a smaller margin (more
//! errors at moderate confidence), and out-of-distribution samples whose
//! logits are peaked at an arbitrary class — confidently wrong, since
//! NULL labels never count as correct.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{CalibrationDataset, LogitRecord};
use crate::error::{Error, Result};

/// Shape of a generated dataset: block sizes, class-logit margins, and
/// the peak height of the out-of-distribution block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub k: usize,
    pub n_in: usize,
    pub n_shift: usize,
    pub n_ood: usize,
    pub in_margin: f64,
    pub shift_margin: f64,
    pub ood_confidence_boost: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            k: 10,
            n_in: 6000,
            n_shift: 2000,
            n_ood: 2000,
            in_margin: 6.0,
            shift_margin: 2.0,
            ood_confidence_boost: 10.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::InvalidInput("need at least two classes".into()));
        }
        for (name, v) in [
            ("in_margin", self.in_margin),
            ("shift_margin", self.shift_margin),
            ("ood_confidence_boost", self.ood_confidence_boost),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::InvalidInput(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// One logit vector: unit Gaussian noise plus `peak` on coordinate `c`.
fn noisy_peak(k: usize, c: usize, peak: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..k)
        .map(|j| {
            let noise: f64 = StandardNormal.sample(rng);
            if j == c {
                noise + peak
            } else {
                noise
            }
        })
        .collect()
}

/// Generates the three blocks in order (in-distribution, shifted, OOD)
/// from one seeded stream. The true class of each labeled sample is
/// uniform; OOD samples peak at a uniformly random class but carry a
/// NULL label, so any prediction on them is wrong.
pub fn generate(cfg: &SynthConfig) -> Result<CalibrationDataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut records = Vec::with_capacity(cfg.n_in + cfg.n_shift + cfg.n_ood);
    for (n, margin) in [(cfg.n_in, cfg.in_margin), (cfg.n_shift, cfg.shift_margin)] {
        for _ in 0..n {
            let c = rng.gen_range(0..cfg.k);
            records.push(LogitRecord {
                logits: noisy_peak(cfg.k, c, margin, &mut rng),
                label: Some(c),
            });
        }
    }
    for _ in 0..cfg.n_ood {
        let j = rng.gen_range(0..cfg.k);
        records.push(LogitRecord {
            logits: noisy_peak(cfg.k, j, cfg.ood_confidence_boost, &mut rng),
            label: None,
        });
    }
    CalibrationDataset::new(cfg.k, records)
}
