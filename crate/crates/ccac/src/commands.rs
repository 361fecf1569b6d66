//! The command layer behind the CLI binary: a flat run configuration
//! (JSON file with flag overrides), the four commands, and the files
//! they leave behind.
//!
//! Every command writes a `manifest.json` into the output directory
//! recording its name and the fully resolved configuration; feeding that
//! manifest back as `--config` replays the run byte-for-byte. All
//! randomness flows from the single master seed: component sub-seeds
//! (synthesis, splitting, fitting, transfer) are derived from it by
//! stable hashing, and any sub-seed present in the input config is
//! overwritten by the derived value during resolution.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::baselines::{fit_dirichlet, fit_scaling_binning, fit_temperature};
use crate::calibrators::calibrated_confidences;
use crate::calibrators::{
    fit_ccac, fit_ccacs, load_model_file, save_model_file, transfer_ccacs, CalibratorModel,
    HyperGrid, ModelFile, Selection, MODEL_FORMAT_VERSION,
};
use crate::dataset::{
    load_dataset, split, write_dataset, CalibrationDataset, DataFormat, SplitSpec,
};
use crate::error::{Error, Result};
use crate::metrics::{
    compute_report, ece, write_histogram_csv, write_reliability_csv, MetricsReport, SELECTION_BINS,
};
use crate::net::TrainConfig;
use crate::seeding::derive_seed;
use crate::synth::SynthConfig;

/// The calibrator kinds `fit` accepts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CalibratorKind {
    Mp,
    Ts,
    Sb,
    Dirichlet,
    Ccac,
    CcacS,
}

impl CalibratorKind {
    pub const ALL: [CalibratorKind; 6] = [
        CalibratorKind::Mp,
        CalibratorKind::Ts,
        CalibratorKind::Sb,
        CalibratorKind::Dirichlet,
        CalibratorKind::Ccac,
        CalibratorKind::CcacS,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Mp => "mp",
            Self::Ts => "ts",
            Self::Sb => "sb",
            Self::Dirichlet => "dirichlet",
            Self::Ccac => "ccac",
            Self::CcacS => "ccac-s",
        }
    }
}

impl std::fmt::Display for CalibratorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CalibratorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::InvalidInput(format!(
                    "unknown calibrator kind \"{s}\" (expected one of: mp, ts, sb, dirichlet, ccac, ccac-s)"
                ))
            })
    }
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}
fn default_bins() -> usize {
    20
}
fn default_format() -> DataFormat {
    DataFormat::Csv
}
fn default_epochs() -> usize {
    1000
}
fn default_batch_size() -> usize {
    256
}
fn default_learning_rate() -> f64 {
    1e-3
}
fn default_hidden() -> Vec<usize> {
    vec![50, 20]
}
fn default_sb_bins() -> usize {
    20
}
fn default_rho_grid() -> Vec<f64> {
    vec![0.0, 1e-3, 1e-2, 1e-1, 1.0]
}
fn default_transfer_train_cap() -> usize {
    320
}
fn default_transfer_val_cap() -> usize {
    200
}

/// Everything a run needs, mirrored between the JSON config file and
/// command-line flags (flags win). Unknown fields in the file are
/// ignored, so a written manifest doubles as a config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Master seed; every component sub-seed is derived from it.
    pub seed: u64,
    /// Output directory.
    pub out: PathBuf,
    /// Metric bin count for evaluation reports.
    pub bins: usize,
    /// Dataset path (fit, eval, transfer).
    pub data: Option<PathBuf>,
    /// Model path (eval, transfer).
    pub model: Option<PathBuf>,
    /// Calibrator to fit.
    pub kind: Option<CalibratorKind>,
    /// Dataset encoding written by `synth` (reads infer it from the
    /// file extension, falling back to this).
    pub format: DataFormat,
    pub split: SplitSpec,
    pub synth: SynthConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub grid: HyperGrid,
    /// Hidden widths of the CCAC net.
    pub hidden: Vec<usize>,
    /// Hidden widths of the CCAC-S auxiliary net; `None` means one
    /// hidden layer as wide as the class count.
    pub aux_hidden: Option<Vec<usize>>,
    /// Bin count of the scaling–binning baseline.
    pub sb_bins: usize,
    /// Regularization grid of the Dirichlet baseline.
    pub rho_grid: Vec<f64>,
    /// At most this many samples train a transfer (clamped, with a
    /// warning, when the dataset is smaller).
    pub transfer_train_cap: usize,
    /// At most this many samples select the transfer's rule.
    pub transfer_val_cap: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: default_out(),
            bins: default_bins(),
            data: None,
            model: None,
            kind: None,
            format: default_format(),
            split: SplitSpec::default(),
            synth: SynthConfig::default(),
            epochs: default_epochs(),
            batch_size: default_batch_size(),
            learning_rate: default_learning_rate(),
            grid: HyperGrid::default(),
            hidden: default_hidden(),
            aux_hidden: None,
            sb_bins: default_sb_bins(),
            rho_grid: default_rho_grid(),
            transfer_train_cap: default_transfer_train_cap(),
            transfer_val_cap: default_transfer_val_cap(),
        }
    }
}

impl RunConfig {
    fn validate(&self) -> Result<()> {
        if self.bins == 0 {
            return Err(Error::InvalidInput("bins must be at least 1".into()));
        }
        Ok(())
    }

    fn require_data(&self, command: &str) -> Result<&Path> {
        self.data
            .as_deref()
            .ok_or_else(|| Error::InvalidInput(format!("{command} requires a dataset (--data)")))
    }

    fn require_model(&self, command: &str) -> Result<&Path> {
        self.model
            .as_deref()
            .ok_or_else(|| Error::InvalidInput(format!("{command} requires a model (--model)")))
    }

    fn train_config(&self, component: &str) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            seed: derive_seed(self.seed, component),
        }
    }
}

/// Reads a run configuration from a JSON file. Manifests load too:
/// their extra `command` field is ignored.
pub fn load_run_config(path: &Path) -> Result<RunConfig> {
    let r = BufReader::new(File::open(path)?);
    Ok(serde_json::from_reader(r)?)
}

/// Command-line flag values layered over the config file; a set flag
/// always wins.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub bins: Option<usize>,
    pub kind: Option<CalibratorKind>,
    pub data: Option<PathBuf>,
    pub model: Option<PathBuf>,
}

pub fn apply_overrides(cfg: &mut RunConfig, ov: &Overrides) {
    if let Some(seed) = ov.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &ov.out {
        cfg.out = out.clone();
    }
    if let Some(bins) = ov.bins {
        cfg.bins = bins;
    }
    if let Some(kind) = ov.kind {
        cfg.kind = Some(kind);
    }
    if let Some(data) = &ov.data {
        cfg.data = Some(data.clone());
    }
    if let Some(model) = &ov.model {
        cfg.model = Some(model.clone());
    }
}

/// The run record every command writes next to its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    #[serde(flatten)]
    pub config: RunConfig,
}

pub const REPORT_FORMAT_VERSION: u32 = 1;

/// The evaluation report: metrics plus the resolved configuration that
/// produced them, so the run can be replayed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub format_version: u32,
    /// Kind of the evaluated model.
    pub kind: String,
    pub config: RunConfig,
    pub metrics: MetricsReport,
}

/// Writes pretty JSON, then re-opens and re-parses the written file so a
/// command only reports success for outputs that actually load.
fn write_json_validated<T: Serialize + DeserializeOwned>(path: &Path, value: &T) -> Result<()> {
    let w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(w, value)?;
    let r = BufReader::new(File::open(path)?);
    let _: T = serde_json::from_reader(r)?;
    Ok(())
}

fn write_manifest(out: &Path, command: &str, config: &RunConfig) -> Result<()> {
    let manifest = Manifest {
        command: command.to_string(),
        config: config.clone(),
    };
    write_json_validated(&out.join("manifest.json"), &manifest)
}

fn load_data(cfg: &RunConfig, path: &Path) -> Result<CalibrationDataset> {
    let format = DataFormat::from_path(path).unwrap_or(cfg.format);
    load_dataset(path, format)
}

/// Generates a synthetic dataset into `out/dataset.{csv,jsonl}` plus a
/// manifest. Returns the dataset path.
pub fn cmd_synth(config: &RunConfig) -> Result<PathBuf> {
    let mut cfg = config.clone();
    cfg.validate()?;
    cfg.synth.seed = derive_seed(cfg.seed, "synth");
    let ds = crate::synth::generate(&cfg.synth)?;
    fs::create_dir_all(&cfg.out)?;
    let name = match cfg.format {
        DataFormat::Csv => "dataset.csv",
        DataFormat::Jsonl => "dataset.jsonl",
    };
    let path = cfg.out.join(name);
    write_dataset(&ds, &path, cfg.format)?;
    let reloaded = load_dataset(&path, cfg.format)?;
    if reloaded.len() != ds.len() {
        return Err(Error::Fit("written dataset failed to round-trip".into()));
    }
    write_manifest(&cfg.out, "synth", &cfg)?;
    Ok(path)
}

/// Splits the dataset, fits the requested calibrator on the training
/// part, selects hyperparameters on the validation part, and writes
/// `model.json` (selection embedded) plus `selection.json` and the
/// manifest. Returns the model path.
pub fn cmd_fit(config: &RunConfig) -> Result<PathBuf> {
    let mut cfg = config.clone();
    cfg.validate()?;
    cfg.split.seed = derive_seed(cfg.seed, "split");
    let kind = cfg
        .kind
        .ok_or_else(|| Error::InvalidInput("fit requires a calibrator kind (--kind)".into()))?;
    let data_path = cfg.require_data("fit")?.to_path_buf();
    let ds = load_data(&cfg, &data_path)?;
    let k = ds.k();
    let (train, val, _test) = split(&ds, &cfg.split)?;

    // Validation ECE of an already-fitted model, for the parameter-free
    // and externally-selected kinds.
    let val_ece_of = |model: &CalibratorModel| -> Result<f64> {
        ece(&calibrated_confidences(model, &val)?, SELECTION_BINS)
    };
    let plain_selection = |val_ece: f64| Selection {
        lambda1: None,
        lambda2: None,
        rho: None,
        rule: None,
        val_ece,
    };

    let (model, selection) = match kind {
        CalibratorKind::Mp => {
            let model = CalibratorModel::Mp { k };
            let e = val_ece_of(&model)?;
            (model, plain_selection(e))
        }
        CalibratorKind::Ts => {
            let model = CalibratorModel::Ts {
                k,
                model: fit_temperature(&train)?,
            };
            let e = val_ece_of(&model)?;
            (model, plain_selection(e))
        }
        CalibratorKind::Sb => {
            let model = CalibratorModel::Sb {
                k,
                model: fit_scaling_binning(&train, cfg.sb_bins)?,
            };
            let e = val_ece_of(&model)?;
            (model, plain_selection(e))
        }
        CalibratorKind::Dirichlet => {
            let (m, val_ece) =
                fit_dirichlet(&train, &val, &cfg.rho_grid, &cfg.train_config("fit"))?;
            let mut sel = plain_selection(val_ece);
            sel.rho = Some(m.rho);
            (CalibratorModel::Dirichlet { model: m }, sel)
        }
        CalibratorKind::Ccac => {
            let (m, sel) = fit_ccac(
                &train,
                &val,
                &cfg.grid,
                &cfg.hidden,
                &cfg.train_config("fit"),
            )?;
            (CalibratorModel::Ccac { model: m }, sel)
        }
        CalibratorKind::CcacS => {
            let aux_hidden = cfg.aux_hidden.clone().unwrap_or_else(|| vec![k]);
            let (m, sel) = fit_ccacs(
                &train,
                &val,
                &cfg.grid,
                &aux_hidden,
                &cfg.train_config("fit"),
            )?;
            (CalibratorModel::CcacS { model: m }, sel)
        }
    };

    fs::create_dir_all(&cfg.out)?;
    let model_path = cfg.out.join("model.json");
    save_model_file(
        &model_path,
        &ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            model,
            selection: Some(selection.clone()),
        },
    )?;
    load_model_file(&model_path)?;
    write_json_validated(&cfg.out.join("selection.json"), &selection)?;
    write_manifest(&cfg.out, "fit", &cfg)?;
    Ok(model_path)
}

/// Evaluates a fitted model over a whole dataset file and writes
/// `report.json` plus plot-ready `tables/*.csv` and the manifest.
/// Returns the report path.
pub fn cmd_eval(config: &RunConfig) -> Result<PathBuf> {
    let cfg = config.clone();
    cfg.validate()?;
    let model_path = cfg.require_model("eval")?.to_path_buf();
    let data_path = cfg.require_data("eval")?.to_path_buf();
    let model_file = load_model_file(&model_path)?;
    let ds = load_data(&cfg, &data_path)?;
    let outcomes = calibrated_confidences(&model_file.model, &ds)?;
    let metrics = compute_report(&outcomes, cfg.bins)?;

    fs::create_dir_all(cfg.out.join("tables"))?;
    write_reliability_csv(
        &cfg.out.join("tables/reliability.csv"),
        &metrics.reliability,
    )?;
    write_histogram_csv(&cfg.out.join("tables/histogram.csv"), &metrics.histogram)?;
    let report = ReportFile {
        format_version: REPORT_FORMAT_VERSION,
        kind: model_file.model.kind().to_string(),
        config: cfg.clone(),
        metrics,
    };
    let report_path = cfg.out.join("report.json");
    write_json_validated(&report_path, &report)?;
    write_manifest(&cfg.out, "eval", &cfg)?;
    Ok(report_path)
}

/// Adapts a fitted CCAC-S model to the given dataset using a small
/// capped sample (shuffled off the master seed), writing the adapted
/// model plus `selection.json` and the manifest. Returns the model path.
pub fn cmd_transfer(config: &RunConfig) -> Result<PathBuf> {
    let cfg = config.clone();
    cfg.validate()?;
    let model_path = cfg.require_model("transfer")?.to_path_buf();
    let data_path = cfg.require_data("transfer")?.to_path_buf();
    let model_file = load_model_file(&model_path)?;
    let pretrained = match model_file.model {
        CalibratorModel::CcacS { model } => model,
        other => {
            return Err(Error::ModelKind {
                expected: "CCAC-S",
                found: other.kind().to_string(),
            })
        }
    };
    let ds = load_data(&cfg, &data_path)?;
    let n = ds.len();
    if n < 2 {
        return Err(Error::Fit(format!(
            "transfer needs at least 2 samples, got {n}"
        )));
    }
    if n < cfg.transfer_train_cap + cfg.transfer_val_cap {
        eprintln!(
            "warning: dataset has {n} samples, fewer than the transfer caps ({} train + {} val); using all of them",
            cfg.transfer_train_cap, cfg.transfer_val_cap
        );
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "transfer-sample"));
    order.shuffle(&mut rng);
    let n_train = cfg.transfer_train_cap.min(n - 1).max(1);
    let n_val = cfg.transfer_val_cap.min(n - n_train);
    let pick = |idx: &[usize]| -> Result<CalibrationDataset> {
        CalibrationDataset::new(
            ds.k(),
            idx.iter().map(|&i| ds.records()[i].clone()).collect(),
        )
    };
    let small_train = pick(&order[..n_train])?;
    let small_val = pick(&order[n_train..n_train + n_val])?;
    let (adapted, selection) = transfer_ccacs(
        &pretrained,
        &small_train,
        &small_val,
        &cfg.train_config("transfer"),
    )?;

    fs::create_dir_all(&cfg.out)?;
    let out_path = cfg.out.join("model.json");
    save_model_file(
        &out_path,
        &ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            model: CalibratorModel::CcacT { model: adapted },
            selection: Some(selection.clone()),
        },
    )?;
    load_model_file(&out_path)?;
    write_json_validated(&cfg.out.join("selection.json"), &selection)?;
    write_manifest(&cfg.out, "transfer", &cfg)?;
    Ok(out_path)
}
