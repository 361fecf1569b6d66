//! Post-hoc confidence calibration for classifiers.
//!
//! A trained classifier ("target model") emits a logit vector per sample;
//! its softmax maximum is a notoriously miscalibrated confidence score,
//! especially under distribution shift or out-of-distribution inputs.
//! This crate calibrates such scores after the fact, without touching the
//! target model:
//!
//! * **CCAC** — a small net maps the K logits to K+1 probabilities, where
//!   the extra class means "the target model got this one wrong". The
//!   calibrated confidence blends the predicted-class probability with the
//!   auxiliary probability ([`calibrators`]).
//! * **CCAC-S** — a simplified variant: a learned temperature rescales the
//!   K logits and a small auxiliary net contributes the extra logit. Its
//!   frozen form supports few-shot **transfer** to a related domain by
//!   retraining only K+2 scalars.
//! * **Baselines** — maximum probability, temperature scaling, scaling
//!   binning, and Dirichlet calibration ([`baselines`]).
//! * **Metrics** — expected calibration error, Brier score, and
//!   misclassification-detection metrics (AUROC, AUPR, precision at
//!   recall), plus reliability tables ([`metrics`]).
//! * **Synthetic data** — seeded in-distribution / shifted /
//!   out-of-distribution logit generators for end-to-end checks
//!   ([`synth`]).
//!
//! Everything is driven by explicit seeds: given the same configuration
//! and master seed, fitting and evaluation reproduce bit-identically.
//!
//! Start with the `examples/` directory — each file demonstrates one
//! capability end to end — or with the `ccac` binary, a thin CLI over
//! [`commands`].

pub mod baselines;
pub mod calibrators;
pub mod commands;
pub mod dataset;
mod error;
pub mod metrics;
pub mod net;
pub mod seeding;
pub mod synth;

pub use error::{Error, Result};
