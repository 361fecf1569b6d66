//! Logit datasets: softmax and argmax of the target model, auxiliary
//! relabeling, seeded splits, and CSV/JSONL I/O.
//!
//! A dataset row is the target model's raw logit vector for one sample
//! plus the ground-truth label. A label may be absent (`None`), meaning
//! the sample belongs to none of the K classes (out-of-distribution);
//! such samples count as misclassified everywhere.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One sample: K logits from the target model and the true label.
///
/// `label == None` marks a sample outside the K known classes; it is
/// treated as misclassified by every calibrator and metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitRecord {
    pub logits: Vec<f64>,
    pub label: Option<usize>,
}

/// A validated collection of [`LogitRecord`]s sharing one class count K.
///
/// Construction checks that K >= 2, every logit vector has length K with
/// finite entries, and every present label is in `0..K`.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationDataset {
    k: usize,
    records: Vec<LogitRecord>,
}

impl CalibrationDataset {
    pub fn new(k: usize, records: Vec<LogitRecord>) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 classes, got {k}"
            )));
        }
        for (i, r) in records.iter().enumerate() {
            if r.logits.len() != k {
                return Err(Error::DimensionMismatch {
                    context: "dataset record logits",
                    expected: k,
                    actual: r.logits.len(),
                });
            }
            if r.logits.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "record {i} has a non-finite logit"
                )));
            }
            if let Some(y) = r.label {
                if y >= k {
                    return Err(Error::InvalidInput(format!(
                        "record {i} has label {y}, valid range is 0..{k} or absent"
                    )));
                }
            }
        }
        Ok(Self { k, records })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn records(&self) -> &[LogitRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Fraction of records whose label equals the target model's argmax.
    /// Absent labels count as wrong.
    pub fn accuracy(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        let correct = self
            .records
            .iter()
            .filter(|r| {
                let (y_hat, _) = predict(&r.logits).expect("validated logits");
                r.label == Some(y_hat)
            })
            .count();
        correct as f64 / self.records.len() as f64
    }
}

/// A record relabeled for auxiliary-class training.
///
/// `aux_label` is the original label when the target model predicted it
/// correctly, and K (the extra class) otherwise. `one_hot` is the same
/// label as a K+1 length indicator vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxLabeledRecord {
    pub logits: Vec<f64>,
    pub aux_label: usize,
    pub one_hot: Vec<f64>,
}

impl AuxLabeledRecord {
    pub fn new(logits: Vec<f64>, aux_label: usize, k: usize) -> Self {
        debug_assert!(aux_label <= k);
        let mut one_hot = vec![0.0; k + 1];
        one_hot[aux_label] = 1.0;
        Self {
            logits,
            aux_label,
            one_hot,
        }
    }
}

/// Fractions for a train/validation/test partition plus the shuffle seed.
/// Fractions must each lie in [0, 1] and sum to 1 within 1e-9.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.6,
            val_fraction: 0.2,
            test_fraction: 0.2,
            seed: 0,
        }
    }
}

impl SplitSpec {
    fn validate(&self) -> Result<()> {
        let fs = [self.train_fraction, self.val_fraction, self.test_fraction];
        if fs.iter().any(|f| !f.is_finite() || *f < 0.0 || *f > 1.0) {
            return Err(Error::InvalidInput(format!(
                "split fractions must lie in [0, 1], got {fs:?}"
            )));
        }
        let sum: f64 = fs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "split fractions must sum to 1, got {sum}"
            )));
        }
        Ok(())
    }
}

/// Numerically stable softmax (max subtraction before exponentiation).
///
/// Errors on an empty or non-finite input. The output is strictly
/// positive and sums to 1 within 1e-12.
pub fn softmax(z: &[f64]) -> Result<Vec<f64>> {
    if z.is_empty() {
        return Err(Error::InvalidInput("softmax of an empty vector".into()));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "softmax input has a non-finite entry".into(),
        ));
    }
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// The target model's prediction: argmax class (ties break to the lowest
/// index) and its softmax probability, the "maximum probability"
/// confidence.
pub fn predict(z: &[f64]) -> Result<(usize, f64)> {
    let p = softmax(z)?;
    let mut best = 0;
    for (i, v) in p.iter().enumerate() {
        if *v > p[best] {
            best = i;
        }
    }
    Ok((best, p[best]))
}

/// Relabels every record for auxiliary-class training: records the target
/// model classified correctly keep their label; misclassified and
/// unlabeled records move to the auxiliary class K.
///
/// By construction the fraction of auxiliary labels equals one minus the
/// target model's accuracy on the dataset.
pub fn assign_aux_labels(ds: &CalibrationDataset) -> Vec<AuxLabeledRecord> {
    ds.records()
        .iter()
        .map(|r| {
            let (y_hat, _) = predict(&r.logits).expect("validated logits");
            let aux = match r.label {
                Some(y) if y == y_hat => y,
                _ => ds.k(),
            };
            AuxLabeledRecord::new(r.logits.clone(), aux, ds.k())
        })
        .collect()
}

/// `floor(n * fraction)` computed on the real product: values within 1e-9
/// of an integer snap to it first, so e.g. 1000 * 0.3 counts as 300 even
/// though the float product is 299.999...
fn fraction_count(n: usize, fraction: f64) -> usize {
    let x = n as f64 * fraction;
    let nearest = x.round();
    let snapped = if (x - nearest).abs() < 1e-9 {
        nearest
    } else {
        x.floor()
    };
    snapped as usize
}

/// Splits a dataset into train/validation/test by a seeded shuffle
/// (Fisher-Yates). Validation and test sizes are floor-rounded; the
/// remainder goes to train. Every record lands in exactly one part.
pub fn split(
    ds: &CalibrationDataset,
    spec: &SplitSpec,
) -> Result<(CalibrationDataset, CalibrationDataset, CalibrationDataset)> {
    spec.validate()?;
    if ds.is_empty() {
        return Err(Error::InvalidInput("cannot split an empty dataset".into()));
    }
    let n = ds.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    order.shuffle(&mut rng);

    let n_val = fraction_count(n, spec.val_fraction);
    let n_test = fraction_count(n, spec.test_fraction);
    let n_train = n - n_val - n_test;

    let take = |range: std::ops::Range<usize>| -> CalibrationDataset {
        let records = order[range]
            .iter()
            .map(|&i| ds.records[i].clone())
            .collect();
        CalibrationDataset { k: ds.k, records }
    };
    Ok((
        take(0..n_train),
        take(n_train..n_train + n_val),
        take(n_train + n_val..n),
    ))
}

/// On-disk dataset encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    /// Header `logit_0,...,logit_{K-1},label`; label -1 encodes "absent".
    Csv,
    /// One `{"logits": [...], "label": <int or null>}` object per line.
    Jsonl,
}

impl DataFormat {
    /// Infers the format from a file extension (`.csv` / `.jsonl`).
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => Some(Self::Csv),
            Some("jsonl") => Some(Self::Jsonl),
            _ => None,
        }
    }
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Loads a dataset, validating as it parses; errors name the offending
/// 1-based line.
pub fn load_dataset(path: &Path, format: DataFormat) -> Result<CalibrationDataset> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    match format {
        DataFormat::Csv => load_csv(path, reader),
        DataFormat::Jsonl => load_jsonl(path, reader),
    }
}

fn load_csv(path: &Path, reader: impl BufRead) -> Result<CalibrationDataset> {
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(h) => h?,
        None => return Err(parse_err(path, 1, "empty file, expected a header")),
    };
    let fields: Vec<&str> = header.trim_end().split(',').collect();
    if fields.len() < 3 || fields[fields.len() - 1] != "label" {
        return Err(parse_err(
            path,
            1,
            "expected header logit_0,...,logit_{K-1},label with K >= 2",
        ));
    }
    let k = fields.len() - 1;
    for (i, f) in fields[..k].iter().enumerate() {
        if *f != format!("logit_{i}") {
            return Err(parse_err(
                path,
                1,
                format!("expected column {} to be named logit_{i}, got {f:?}", i + 1),
            ));
        }
    }

    let mut records = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2; // 1-based, after the header
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.trim_end().split(',').collect();
        if cells.len() != k + 1 {
            return Err(parse_err(
                path,
                line_no,
                format!("expected {} fields, got {}", k + 1, cells.len()),
            ));
        }
        let mut logits = Vec::with_capacity(k);
        for (i, cell) in cells[..k].iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| {
                parse_err(
                    path,
                    line_no,
                    format!("logit_{i} is not a number: {cell:?}"),
                )
            })?;
            if !v.is_finite() {
                return Err(parse_err(path, line_no, format!("logit_{i} is not finite")));
            }
            logits.push(v);
        }
        let raw_label: i64 = cells[k].trim().parse().map_err(|_| {
            parse_err(
                path,
                line_no,
                format!("label is not an integer: {:?}", cells[k]),
            )
        })?;
        let label = match raw_label {
            -1 => None,
            y if y >= 0 && (y as usize) < k => Some(y as usize),
            y => {
                return Err(parse_err(
                    path,
                    line_no,
                    format!("label {y} out of range, expected -1 or 0..{k}"),
                ))
            }
        };
        records.push(LogitRecord { logits, label });
    }
    CalibrationDataset::new(k, records)
}

fn load_jsonl(path: &Path, reader: impl BufRead) -> Result<CalibrationDataset> {
    let mut records: Vec<LogitRecord> = Vec::new();
    let mut k = None;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: LogitRecord =
            serde_json::from_str(&line).map_err(|e| parse_err(path, line_no, e.to_string()))?;
        let this_k = rec.logits.len();
        match k {
            None => k = Some(this_k),
            Some(k0) if k0 != this_k => {
                return Err(parse_err(
                    path,
                    line_no,
                    format!("expected {k0} logits, got {this_k}"),
                ))
            }
            _ => {}
        }
        if rec.logits.iter().any(|v| !v.is_finite()) {
            return Err(parse_err(
                path,
                line_no,
                "logits contain a non-finite value",
            ));
        }
        if let Some(y) = rec.label {
            if y >= this_k {
                return Err(parse_err(
                    path,
                    line_no,
                    format!("label {y} out of range, expected null or 0..{this_k}"),
                ));
            }
        }
        records.push(rec);
    }
    let k = k.ok_or_else(|| parse_err(path, 1, "empty file, cannot infer class count"))?;
    CalibrationDataset::new(k, records)
}

/// Writes a dataset. Floats use the shortest representation that parses
/// back to the identical value, so write-then-load round-trips exactly.
pub fn write_dataset(ds: &CalibrationDataset, path: &Path, format: DataFormat) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    match format {
        DataFormat::Csv => {
            let header: Vec<String> = (0..ds.k()).map(|i| format!("logit_{i}")).collect();
            writeln!(w, "{},label", header.join(","))?;
            for r in ds.records() {
                let cells: Vec<String> = r.logits.iter().map(|v| format!("{v}")).collect();
                let label = r.label.map_or(-1, |y| y as i64);
                writeln!(w, "{},{}", cells.join(","), label)?;
            }
        }
        DataFormat::Jsonl => {
            for r in ds.records() {
                writeln!(w, "{}", serde_json::to_string(r)?)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
