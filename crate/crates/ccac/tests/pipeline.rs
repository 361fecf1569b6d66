//! End-to-end runs of the command layer: synth -> fit -> eval ->
//! transfer, using small datasets and short training budgets.

use std::fs;
use std::path::{Path, PathBuf};

use ccac::calibrators::{load_model_file, CalibratorModel, HyperGrid, Selection};
use ccac::commands::{
    cmd_eval, cmd_fit, cmd_synth, cmd_transfer, CalibratorKind, ReportFile, RunConfig,
};
use ccac::synth::SynthConfig;

/// A quick config: small data, short training, singleton CCAC grid.
fn quick_config(out: &Path) -> RunConfig {
    RunConfig {
        out: out.to_path_buf(),
        synth: SynthConfig {
            k: 5,
            n_in: 300,
            n_shift: 100,
            n_ood: 100,
            ..SynthConfig::default()
        },
        epochs: 5,
        batch_size: 64,
        grid: HyperGrid {
            lambda1_values: vec![0.5],
            lambda2_values: vec![1.0],
        },
        hidden: vec![8],
        rho_grid: vec![0.0, 0.1],
        ..RunConfig::default()
    }
}

fn synth_to(dir: &Path, cfg: &RunConfig) -> PathBuf {
    let mut c = cfg.clone();
    c.out = dir.to_path_buf();
    cmd_synth(&c).unwrap()
}

fn read_report(path: &Path) -> ReportFile {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn every_kind_fits_and_evaluates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path());
    let data = synth_to(&dir.path().join("data"), &cfg);
    for kind in CalibratorKind::ALL {
        let out = dir.path().join(format!("fit-{kind}"));
        let fit_cfg = RunConfig {
            out: out.clone(),
            kind: Some(kind),
            data: Some(data.clone()),
            ..cfg.clone()
        };
        let model_path = cmd_fit(&fit_cfg).unwrap();
        let model_file = load_model_file(&model_path).unwrap();
        assert_eq!(model_file.model.kind(), kind.name());
        let selection: Selection =
            serde_json::from_str(&fs::read_to_string(out.join("selection.json")).unwrap()).unwrap();
        assert!(selection.val_ece.is_finite());
        assert_eq!(model_file.selection, Some(selection));

        let eval_out = dir.path().join(format!("eval-{kind}"));
        let eval_cfg = RunConfig {
            out: eval_out.clone(),
            model: Some(model_path),
            data: Some(data.clone()),
            ..cfg.clone()
        };
        let report_path = cmd_eval(&eval_cfg).unwrap();
        let report = read_report(&report_path);
        assert_eq!(report.kind, kind.name());
        assert_eq!(report.metrics.n, 500);
        assert!(report.metrics.ece.is_finite());
        assert!(eval_out.join("tables/reliability.csv").is_file());
        assert!(eval_out.join("tables/histogram.csv").is_file());
    }
}

#[test]
fn mp_on_separable_data_has_near_zero_ece() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = quick_config(dir.path());
    cfg.synth = SynthConfig {
        k: 5,
        n_in: 1000,
        n_shift: 0,
        n_ood: 0,
        in_margin: 10.0,
        ..SynthConfig::default()
    };
    let data = synth_to(&dir.path().join("data"), &cfg);
    cfg.kind = Some(CalibratorKind::Mp);
    cfg.data = Some(data.clone());
    cfg.out = dir.path().join("fit");
    let model_path = cmd_fit(&cfg).unwrap();
    cfg.model = Some(model_path);
    cfg.out = dir.path().join("eval");
    let report = read_report(&cmd_eval(&cfg).unwrap());
    assert!(
        report.metrics.ece < 0.02,
        "ECE {} on separable data",
        report.metrics.ece
    );
}

#[test]
fn ts_fit_reports_positive_temperature() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = quick_config(dir.path());
    let data = synth_to(&dir.path().join("data"), &cfg);
    cfg.kind = Some(CalibratorKind::Ts);
    cfg.data = Some(data);
    cfg.out = dir.path().join("fit");
    let model_file = load_model_file(&cmd_fit(&cfg).unwrap()).unwrap();
    match model_file.model {
        CalibratorModel::Ts { model, .. } => assert!(model.t > 0.0),
        other => panic!("expected ts, got {}", other.kind()),
    }
}

#[test]
fn ccac_singleton_grid_selection_names_the_grid_point() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = quick_config(dir.path());
    cfg.grid = HyperGrid {
        lambda1_values: vec![2.0],
        lambda2_values: vec![0.5],
    };
    let data = synth_to(&dir.path().join("data"), &cfg);
    cfg.kind = Some(CalibratorKind::Ccac);
    cfg.data = Some(data);
    cfg.out = dir.path().join("fit");
    cmd_fit(&cfg).unwrap();
    let selection: Selection =
        serde_json::from_str(&fs::read_to_string(cfg.out.join("selection.json")).unwrap()).unwrap();
    assert_eq!(selection.lambda1, Some(2.0));
    assert_eq!(selection.lambda2, Some(0.5));
    assert!(selection.rule.is_some());
}

#[test]
fn synth_replay_from_manifest_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(&dir.path().join("a"));
    let first = cmd_synth(&cfg).unwrap();
    let first_bytes = fs::read(&first).unwrap();

    // Feed the manifest back as the config of a fresh run.
    let manifest_cfg =
        ccac::commands::load_run_config(&dir.path().join("a/manifest.json")).unwrap();
    let replay_cfg = RunConfig {
        out: dir.path().join("b"),
        ..manifest_cfg
    };
    let second = cmd_synth(&replay_cfg).unwrap();
    assert_eq!(first_bytes, fs::read(&second).unwrap());
}

#[test]
fn eval_rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = quick_config(dir.path());
    let data = synth_to(&dir.path().join("data"), &cfg);
    cfg.kind = Some(CalibratorKind::Sb);
    cfg.data = Some(data.clone());
    cfg.out = dir.path().join("fit");
    let model_path = cmd_fit(&cfg).unwrap();
    cfg.model = Some(model_path);
    cfg.out = dir.path().join("eval");
    let report_path = cmd_eval(&cfg).unwrap();
    let first = fs::read(&report_path).unwrap();
    cmd_eval(&cfg).unwrap();
    assert_eq!(first, fs::read(&report_path).unwrap());
}

#[test]
fn eval_without_misclassifications_reports_null_detection_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = quick_config(dir.path());
    cfg.synth = SynthConfig {
        k: 5,
        n_in: 400,
        n_shift: 0,
        n_ood: 0,
        in_margin: 12.0,
        ..SynthConfig::default()
    };
    let data = synth_to(&dir.path().join("data"), &cfg);
    cfg.kind = Some(CalibratorKind::Mp);
    cfg.data = Some(data);
    cfg.out = dir.path().join("fit");
    let model_path = cmd_fit(&cfg).unwrap();
    cfg.model = Some(model_path);
    cfg.out = dir.path().join("eval");
    let report = read_report(&cmd_eval(&cfg).unwrap());
    // Margin 12 leaves nothing misclassified, so detection metrics are
    // undefined and must be reported as null with a warning.
    assert_eq!(report.metrics.auroc, None);
    assert_eq!(report.metrics.aupr, None);
    assert!(!report.metrics.warnings.is_empty());
}

#[test]
fn eval_rejects_class_count_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = quick_config(dir.path());
    let data5 = synth_to(&dir.path().join("data5"), &cfg);
    cfg.kind = Some(CalibratorKind::Mp);
    cfg.data = Some(data5);
    cfg.out = dir.path().join("fit");
    let model_path = cmd_fit(&cfg).unwrap();

    let mut cfg3 = quick_config(dir.path());
    cfg3.synth.k = 3;
    let data3 = synth_to(&dir.path().join("data3"), &cfg3);
    cfg.model = Some(model_path);
    cfg.data = Some(data3);
    cfg.out = dir.path().join("eval");
    let err = cmd_eval(&cfg).unwrap_err().to_string();
    assert!(err.contains("dimension mismatch"), "{err}");
}

#[test]
fn transfer_rejects_non_ccacs_models() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = quick_config(dir.path());
    let data = synth_to(&dir.path().join("data"), &cfg);
    cfg.kind = Some(CalibratorKind::Mp);
    cfg.data = Some(data.clone());
    cfg.out = dir.path().join("fit");
    let model_path = cmd_fit(&cfg).unwrap();
    cfg.model = Some(model_path);
    cfg.out = dir.path().join("transfer");
    let err = cmd_transfer(&cfg).unwrap_err().to_string();
    assert!(
        err.contains("transfer requires a CCAC-S model"),
        "unexpected message: {err}"
    );
}

#[test]
fn transfer_freezes_everything_outside_temperature_and_last_layer() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = quick_config(dir.path());
    let data = synth_to(&dir.path().join("data"), &cfg);
    cfg.kind = Some(CalibratorKind::CcacS);
    cfg.data = Some(data.clone());
    cfg.out = dir.path().join("fit");
    let pre_path = cmd_fit(&cfg).unwrap();

    // Caps larger than the 500-sample dataset: all samples are used.
    cfg.model = Some(pre_path.clone());
    cfg.out = dir.path().join("transfer");
    let post_path = cmd_transfer(&cfg).unwrap();

    let pre = match load_model_file(&pre_path).unwrap().model {
        CalibratorModel::CcacS { model } => model,
        other => panic!("expected ccac-s, got {}", other.kind()),
    };
    let post = match load_model_file(&post_path).unwrap().model {
        CalibratorModel::CcacT { model } => model,
        other => panic!("expected ccac-t, got {}", other.kind()),
    };
    // Model-file diff: every layer but the last is bit-identical.
    let n_layers = pre.aux_net.layers().len();
    assert_eq!(n_layers, post.aux_net.layers().len());
    for (i, (a, b)) in pre
        .aux_net
        .layers()
        .iter()
        .zip(post.aux_net.layers())
        .enumerate()
        .take(n_layers - 1)
    {
        assert_eq!(a.weights, b.weights, "frozen layer {i} weights moved");
        assert_eq!(a.bias, b.bias, "frozen layer {i} bias moved");
    }
    assert_eq!(pre.loss, post.loss);
    assert!(post.temperature > 0.0);
}

#[test]
fn synth_ood_only_writes_null_labels() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = quick_config(dir.path());
    cfg.synth = SynthConfig {
        n_in: 0,
        n_shift: 0,
        n_ood: 5,
        ..SynthConfig::default()
    };
    let path = cmd_synth(&cfg).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    // Header plus five rows, each ending in the NULL marker -1.
    assert_eq!(lines.len(), 6);
    assert_eq!(lines[0].matches(',').count(), cfg.synth.k);
    assert!(lines[0].ends_with(",label"));
    for row in &lines[1..] {
        assert!(row.ends_with(",-1"), "expected NULL label: {row}");
    }
}
