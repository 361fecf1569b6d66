//! Fits one auxiliary-class calibrator, evaluates it, prints the
//! reliability diagram as text, and writes the full report (JSON plus
//! CSV tables) to `report/`.
//!
//! Run with `cargo run --example reliability_report`.

use std::fs;
use std::path::Path;

use ccac::calibrators::{calibrated_confidences, fit_ccac, CalibratorModel, HyperGrid};
use ccac::dataset::{split, SplitSpec};
use ccac::metrics::{compute_report, write_histogram_csv, write_reliability_csv};
use ccac::net::TrainConfig;
use ccac::seeding::derive_seed;
use ccac::synth::{generate, SynthConfig};

fn main() -> ccac::Result<()> {
    let seed = 0;
    let data = generate(&SynthConfig {
        seed,
        ..SynthConfig::default()
    })?;
    let (train, val, test) = split(
        &data,
        &SplitSpec {
            seed: derive_seed(seed, "split"),
            ..SplitSpec::default()
        },
    )?;

    let cfg = TrainConfig {
        epochs: 60,
        batch_size: 256,
        learning_rate: 1e-2,
        seed: derive_seed(seed, "fit"),
    };
    let (model, selection) = fit_ccac(&train, &val, &HyperGrid::default(), &[20], &cfg)?;
    println!(
        "selected lambda1={:?}, lambda2={:?}, rule={:?} (validation ECE {:.4})\n",
        selection.lambda1, selection.lambda2, selection.rule, selection.val_ece
    );

    let outcomes = calibrated_confidences(&CalibratorModel::Ccac { model }, &test)?;
    let report = compute_report(&outcomes, 10)?;
    println!(
        "test: n={}  ece={:.4}  brier={:.4}  auroc={:?}  aupr={:?}",
        report.n, report.ece, report.brier, report.auroc, report.aupr
    );

    println!(
        "\n{:>12} {:>6} {:>8} {:>8} {:>7}",
        "bin", "count", "conf", "acc", "gap"
    );
    for bin in &report.reliability {
        println!(
            "[{:.2}, {:.2}) {:>6} {:>8.3} {:>8.3} {:>7.3}",
            bin.lo,
            bin.hi,
            bin.count,
            bin.conf,
            bin.acc,
            (bin.conf - bin.acc).abs()
        );
    }
    for w in &report.warnings {
        println!("warning: {w}");
    }

    let out = Path::new("report");
    fs::create_dir_all(out.join("tables"))?;
    write_reliability_csv(&out.join("tables/reliability.csv"), &report.reliability)?;
    write_histogram_csv(&out.join("tables/histogram.csv"), &report.histogram)?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    fs::write(out.join("report.json"), json)?;
    println!("\nwrote report/report.json and report/tables/*.csv");
    Ok(())
}
