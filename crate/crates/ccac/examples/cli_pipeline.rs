//! Drives the whole command pipeline through the library entry points
//! the `ccac` binary wraps: synthesize source and target datasets, fit
//! a CCAC-S calibrator on the source, evaluate it, adapt it to the
//! shifted target with a small sample budget, and evaluate the adapted
//! model. Every command writes a manifest; the example replays the
//! synth step from its own manifest to show the outputs are
//! byte-identical.
//!
//! Run with `cargo run --example cli_pipeline`.

use std::fs;

use ccac::commands::{
    cmd_eval, cmd_fit, cmd_synth, cmd_transfer, load_run_config, CalibratorKind, RunConfig,
};
use ccac::synth::SynthConfig;

fn main() -> ccac::Result<()> {
    let dir = tempfile::tempdir().expect("temp dir");
    let root = dir.path();

    let base = RunConfig {
        seed: 7,
        synth: SynthConfig {
            k: 6,
            n_in: 1500,
            n_shift: 500,
            n_ood: 500,
            ..SynthConfig::default()
        },
        epochs: 60,
        batch_size: 256,
        learning_rate: 1e-2,
        hidden: vec![20],
        ..RunConfig::default()
    };

    let source = cmd_synth(&RunConfig {
        out: root.join("source"),
        ..base.clone()
    })?;
    println!("synth    -> {}", source.display());

    // Shifted target domain: a different seed and no easy
    // in-distribution block at all.
    let target = cmd_synth(&RunConfig {
        out: root.join("target"),
        seed: 8,
        synth: SynthConfig {
            n_in: 0,
            ..base.synth.clone()
        },
        ..base.clone()
    })?;
    println!("synth    -> {}", target.display());

    let model = cmd_fit(&RunConfig {
        out: root.join("fit"),
        kind: Some(CalibratorKind::CcacS),
        data: Some(source.clone()),
        ..base.clone()
    })?;
    println!("fit      -> {}", model.display());

    let report = cmd_eval(&RunConfig {
        out: root.join("eval"),
        model: Some(model.clone()),
        data: Some(source.clone()),
        ..base.clone()
    })?;
    println!("eval     -> {}", report.display());

    let adapted = cmd_transfer(&RunConfig {
        out: root.join("transfer"),
        model: Some(model.clone()),
        data: Some(target.clone()),
        epochs: 150,
        batch_size: 64,
        ..base.clone()
    })?;
    println!("transfer -> {}", adapted.display());

    let adapted_report = cmd_eval(&RunConfig {
        out: root.join("eval-transfer"),
        model: Some(adapted.clone()),
        data: Some(target.clone()),
        ..base.clone()
    })?;
    println!("eval     -> {}", adapted_report.display());

    // Manifests double as configs: replaying one reproduces the run
    // byte for byte.
    let replayed = load_run_config(&root.join("source/manifest.json"))?;
    cmd_synth(&RunConfig {
        out: root.join("replay"),
        ..replayed
    })?;
    println!(
        "\nreplay from manifest is byte-identical: {}",
        fs::read(&source)? == fs::read(root.join("replay/dataset.csv"))?
    );

    let ece_of = |path: &std::path::Path| -> f64 {
        let parsed: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(path).expect("report exists"))
                .expect("valid report");
        parsed["metrics"]["ece"].as_f64().expect("ece present")
    };
    println!(
        "source-domain test ECE {:.4}, target-domain ECE after transfer {:.4}",
        ece_of(&report),
        ece_of(&adapted_report)
    );
    Ok(())
}
