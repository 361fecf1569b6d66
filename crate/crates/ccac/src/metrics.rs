//! Calibration and misclassification-detection metrics.
//!
//! Every metric consumes `(confidence, correct)` pairs. Calibration error
//! and the diagram tables share one binning convention: M equal-width
//! bins over [0, 1], bin m covering [m/M, (m+1)/M) with the last bin
//! closed at 1. For detection metrics a sample is *positive* when the
//! target model got it wrong and its score is `1 - confidence`, so higher
//! scores should flag errors.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One evaluated sample: calibrated confidence in [0, 1] and whether the
/// target model's prediction matched the label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOutcome {
    pub confidence: f64,
    pub correct: bool,
}

impl EvalOutcome {
    pub fn new(confidence: f64, correct: bool) -> Self {
        Self {
            confidence,
            correct,
        }
    }
}

fn check_outcomes(outcomes: &[EvalOutcome]) -> Result<()> {
    for (i, o) in outcomes.iter().enumerate() {
        if !o.confidence.is_finite() || o.confidence < 0.0 || o.confidence > 1.0 {
            return Err(Error::InvalidInput(format!(
                "outcome {i} has confidence {} outside [0, 1]",
                o.confidence
            )));
        }
    }
    Ok(())
}

fn check_nonempty(outcomes: &[EvalOutcome], what: &str) -> Result<()> {
    if outcomes.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{what} of an empty sample set"
        )));
    }
    Ok(())
}

fn check_bins(bins: usize) -> Result<()> {
    if bins == 0 {
        return Err(Error::InvalidInput("bin count must be at least 1".into()));
    }
    Ok(())
}

/// Index of the bin containing `c`; confidence 1.0 lands in the last bin.
fn bin_index(c: f64, bins: usize) -> usize {
    ((c * bins as f64).floor() as usize).min(bins - 1)
}

/// Bin count used for validation-ECE model selection, matching the
/// default reporting resolution so selected and reported scores agree.
pub const SELECTION_BINS: usize = 20;

/// Expected calibration error over `bins` equal-width bins: the
/// bin-count-weighted mean absolute gap between accuracy and mean
/// confidence. Empty bins contribute nothing. 0 for perfect calibration,
/// at most 1.
pub fn ece(outcomes: &[EvalOutcome], bins: usize) -> Result<f64> {
    check_bins(bins)?;
    check_nonempty(outcomes, "calibration error")?;
    check_outcomes(outcomes)?;
    let table = table_counts(outcomes, bins);
    let n = outcomes.len() as f64;
    let mut total = 0.0;
    for b in &table {
        if b.count > 0 {
            let acc = b.n_correct as f64 / b.count as f64;
            let conf = b.conf_sum / b.count as f64;
            total += b.count as f64 / n * (acc - conf).abs();
        }
    }
    Ok(total)
}

/// Brier score: mean squared gap between confidence and the 0/1
/// correctness indicator. 0 is best, 1 worst.
pub fn brier(outcomes: &[EvalOutcome]) -> Result<f64> {
    check_nonempty(outcomes, "Brier score")?;
    check_outcomes(outcomes)?;
    let sum: f64 = outcomes
        .iter()
        .map(|o| {
            let target = if o.correct { 1.0 } else { 0.0 };
            (target - o.confidence).powi(2)
        })
        .sum();
    Ok(sum / outcomes.len() as f64)
}

/// Detection score and positive flag for misclassification detection.
fn detection_scores(outcomes: &[EvalOutcome]) -> Vec<(f64, bool)> {
    outcomes
        .iter()
        .map(|o| (1.0 - o.confidence, !o.correct))
        .collect()
}

/// Area under the ROC curve for detecting misclassified samples from the
/// score `1 - confidence`, via the Mann-Whitney statistic with midranks
/// for ties. Errors unless both classes are present.
pub fn auroc(outcomes: &[EvalOutcome]) -> Result<f64> {
    check_nonempty(outcomes, "AUROC")?;
    check_outcomes(outcomes)?;
    let mut scored = detection_scores(outcomes);
    let p = scored.iter().filter(|(_, pos)| *pos).count();
    let n_neg = scored.len() - p;
    if p == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric(
            "AUROC needs at least one correct and one wrong sample".into(),
        ));
    }
    scored.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite scores"));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < scored.len() {
        let mut j = i;
        while j < scored.len() && scored[j].0 == scored[i].0 {
            j += 1;
        }
        // Ranks are 1-based; the tie group [i, j) shares the midrank.
        let midrank = (i + 1 + j) as f64 / 2.0;
        for item in &scored[i..j] {
            if item.1 {
                rank_sum_pos += midrank;
            }
        }
        i = j;
    }
    let u = rank_sum_pos - (p * (p + 1)) as f64 / 2.0;
    Ok(u / (p as f64 * n_neg as f64))
}

/// Sorts descending by score; ties keep their original relative order.
fn rank_descending(outcomes: &[EvalOutcome]) -> Vec<(f64, bool)> {
    let mut scored = detection_scores(outcomes);
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite scores"));
    scored
}

/// Area under the precision-recall curve as step-wise average precision:
/// the mean, over positives in descending-score order, of precision at
/// each positive's rank. Errors with no positive samples.
pub fn aupr(outcomes: &[EvalOutcome]) -> Result<f64> {
    check_nonempty(outcomes, "AUPR")?;
    check_outcomes(outcomes)?;
    let scored = rank_descending(outcomes);
    let p = scored.iter().filter(|(_, pos)| *pos).count();
    if p == 0 {
        return Err(Error::UndefinedMetric(
            "AUPR needs at least one wrong sample".into(),
        ));
    }
    let mut tp = 0usize;
    let mut sum_precision = 0.0;
    for (rank0, (_, pos)) in scored.iter().enumerate() {
        if *pos {
            tp += 1;
            sum_precision += tp as f64 / (rank0 + 1) as f64;
        }
    }
    Ok(sum_precision / p as f64)
}

/// Precision at the smallest rank cutoff whose recall reaches `recall`,
/// sweeping the ranked list from the top. `recall == 0` returns the
/// precision of the single top-ranked sample. Errors with no positives
/// or `recall` outside [0, 1].
pub fn precision_at_recall(outcomes: &[EvalOutcome], recall: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&recall) {
        return Err(Error::InvalidInput(format!(
            "recall target must lie in [0, 1], got {recall}"
        )));
    }
    check_nonempty(outcomes, "precision at recall")?;
    check_outcomes(outcomes)?;
    let scored = rank_descending(outcomes);
    let p = scored.iter().filter(|(_, pos)| *pos).count();
    if p == 0 {
        return Err(Error::UndefinedMetric(
            "precision at recall needs at least one wrong sample".into(),
        ));
    }
    let mut tp = 0usize;
    for (rank0, (_, pos)) in scored.iter().enumerate() {
        if *pos {
            tp += 1;
        }
        if tp as f64 / p as f64 >= recall {
            return Ok(tp as f64 / (rank0 + 1) as f64);
        }
    }
    unreachable!("recall reaches 1.0 at the end of the sweep");
}

/// One row of a reliability diagram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    /// Mean confidence of the bin's samples; 0 when the bin is empty.
    pub conf: f64,
    /// Accuracy of the bin's samples; 0 when the bin is empty.
    pub acc: f64,
}

/// One row of a correct/wrong confidence histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub n_correct: usize,
    pub n_wrong: usize,
}

struct BinCount {
    count: usize,
    n_correct: usize,
    conf_sum: f64,
}

fn table_counts(outcomes: &[EvalOutcome], bins: usize) -> Vec<BinCount> {
    let mut table: Vec<BinCount> = (0..bins)
        .map(|_| BinCount {
            count: 0,
            n_correct: 0,
            conf_sum: 0.0,
        })
        .collect();
    for o in outcomes {
        let b = &mut table[bin_index(o.confidence, bins)];
        b.count += 1;
        b.conf_sum += o.confidence;
        if o.correct {
            b.n_correct += 1;
        }
    }
    table
}

/// Per-bin counts, mean confidence, and accuracy over all `bins` bins
/// (empty bins included). Recomputing calibration error from this table
/// reproduces [`ece`] exactly.
pub fn reliability_table(outcomes: &[EvalOutcome], bins: usize) -> Result<Vec<ReliabilityBin>> {
    check_bins(bins)?;
    check_outcomes(outcomes)?;
    let table = table_counts(outcomes, bins);
    Ok(table
        .iter()
        .enumerate()
        .map(|(m, b)| ReliabilityBin {
            lo: m as f64 / bins as f64,
            hi: (m + 1) as f64 / bins as f64,
            count: b.count,
            conf: if b.count > 0 {
                b.conf_sum / b.count as f64
            } else {
                0.0
            },
            acc: if b.count > 0 {
                b.n_correct as f64 / b.count as f64
            } else {
                0.0
            },
        })
        .collect())
}

/// Per-bin counts of correct and wrong samples, same binning as
/// [`reliability_table`].
pub fn histogram_table(outcomes: &[EvalOutcome], bins: usize) -> Result<Vec<HistogramBin>> {
    check_bins(bins)?;
    check_outcomes(outcomes)?;
    let table = table_counts(outcomes, bins);
    Ok(table
        .iter()
        .enumerate()
        .map(|(m, b)| HistogramBin {
            lo: m as f64 / bins as f64,
            hi: (m + 1) as f64 / bins as f64,
            n_correct: b.n_correct,
            n_wrong: b.count - b.n_correct,
        })
        .collect())
}

/// Full evaluation bundle: scalar metrics plus both diagram tables.
///
/// Detection metrics are `None` (with an explanatory warning) when the
/// sample set contains a single class, e.g. nothing was misclassified.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    pub bins: usize,
    pub ece: f64,
    pub brier: f64,
    pub auroc: Option<f64>,
    pub aupr: Option<f64>,
    pub precision_at_90_recall: Option<f64>,
    pub warnings: Vec<String>,
    pub reliability: Vec<ReliabilityBin>,
    pub histogram: Vec<HistogramBin>,
}

/// Computes every metric at once. Undefined detection metrics become
/// `None` plus a warning rather than an error; anything else fails fast.
pub fn compute_report(outcomes: &[EvalOutcome], bins: usize) -> Result<MetricsReport> {
    let mut warnings = Vec::new();
    let mut optional = |r: Result<f64>| -> Result<Option<f64>> {
        match r {
            Ok(v) => Ok(Some(v)),
            Err(Error::UndefinedMetric(msg)) => {
                warnings.push(msg);
                Ok(None)
            }
            Err(e) => Err(e),
        }
    };
    let ece_v = ece(outcomes, bins)?;
    let brier_v = brier(outcomes)?;
    let auroc_v = optional(auroc(outcomes))?;
    let aupr_v = optional(aupr(outcomes))?;
    let p90_v = optional(precision_at_recall(outcomes, 0.9))?;
    Ok(MetricsReport {
        n: outcomes.len(),
        bins,
        ece: ece_v,
        brier: brier_v,
        auroc: auroc_v,
        aupr: aupr_v,
        precision_at_90_recall: p90_v,
        warnings,
        reliability: reliability_table(outcomes, bins)?,
        histogram: histogram_table(outcomes, bins)?,
    })
}

/// Writes a reliability table as CSV with header
/// `bin_lo,bin_hi,count,conf,acc`.
pub fn write_reliability_csv(path: &Path, table: &[ReliabilityBin]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "bin_lo,bin_hi,count,conf,acc")?;
    for b in table {
        writeln!(w, "{},{},{},{},{}", b.lo, b.hi, b.count, b.conf, b.acc)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a histogram table as CSV with header
/// `bin_lo,bin_hi,n_correct,n_wrong`.
pub fn write_histogram_csv(path: &Path, table: &[HistogramBin]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "bin_lo,bin_hi,n_correct,n_wrong")?;
    for b in table {
        writeln!(w, "{},{},{},{}", b.lo, b.hi, b.n_correct, b.n_wrong)?;
    }
    w.flush()?;
    Ok(())
}
