//! Few-shot domain transfer: pretrain CCAC-S where the classifier is
//! mostly right, then adapt it to a shifted domain (smaller margins,
//! more mistakes) from a few hundred labeled samples. Only the
//! temperature and the auxiliary net's last layer move — K+2 scalars
//! for a penultimate width of K — yet the adapted model should track a
//! CCAC-S fitted from scratch on the full shifted training split.
//!
//! Run with `cargo run --example transfer_few_shot`.

use std::time::Instant;

use ccac::calibrators::{
    calibrated_confidences, fit_ccacs, transfer_ccacs, CalibratorModel, HyperGrid,
};
use ccac::dataset::{split, CalibrationDataset, SplitSpec};
use ccac::metrics::ece;
use ccac::net::TrainConfig;
use ccac::seeding::derive_seed;
use ccac::synth::{generate, SynthConfig};

fn take(ds: &CalibrationDataset, n: usize) -> ccac::Result<CalibrationDataset> {
    CalibrationDataset::new(ds.k(), ds.records()[..n.min(ds.len())].to_vec())
}

fn main() -> ccac::Result<()> {
    let bins = 20;
    println!(
        "{:>4} {:>8} {:>8} {:>9} {:>9} {:>7} {:>6}",
        "seed", "T_pre", "T_post", "ece_scr", "ece_tran", "gap", "secs"
    );
    for seed in 0..5 {
        let t0 = Instant::now();
        // Source domain: the full default mix (wide-margin, shifted,
        // and OOD blocks).
        let source = generate(&SynthConfig {
            seed,
            ..SynthConfig::default()
        })?;
        let (src_train, src_val, _) = split(
            &source,
            &SplitSpec {
                seed: derive_seed(seed, "source-split"),
                ..SplitSpec::default()
            },
        )?;
        let k = source.k();
        let cfg = TrainConfig {
            epochs: 60,
            batch_size: 256,
            learning_rate: 1e-2,
            seed: derive_seed(seed, "pretrain"),
        };
        let (pre, _) = fit_ccacs(&src_train, &src_val, &HyperGrid::default(), &[k], &cfg)?;

        // Target domain: only shifted and OOD samples.
        let target = generate(&SynthConfig {
            n_in: 0,
            seed: derive_seed(seed, "target"),
            ..SynthConfig::default()
        })?;
        let (tgt_train, tgt_val, tgt_test) = split(
            &target,
            &SplitSpec {
                seed: derive_seed(seed, "target-split"),
                ..SplitSpec::default()
            },
        )?;

        // Few-shot adaptation: 320 training and 200 selection samples.
        let small_train = take(&tgt_train, 320)?;
        let small_val = take(&tgt_val, 200)?;
        let transfer_cfg = TrainConfig {
            epochs: 150,
            batch_size: 64,
            learning_rate: 1e-2,
            seed: derive_seed(seed, "transfer"),
        };
        let (adapted, _) = transfer_ccacs(&pre, &small_train, &small_val, &transfer_cfg)?;

        // The reference: a CCAC-S fitted from scratch on everything.
        let (scratch, _) = fit_ccacs(
            &tgt_train,
            &tgt_val,
            &HyperGrid::default(),
            &[k],
            &TrainConfig {
                seed: derive_seed(seed, "scratch"),
                ..cfg.clone()
            },
        )?;

        let ece_of = |m: CalibratorModel| -> ccac::Result<f64> {
            ece(&calibrated_confidences(&m, &tgt_test)?, bins)
        };
        let e_scratch = ece_of(CalibratorModel::CcacS {
            model: scratch.clone(),
        })?;
        let e_transfer = ece_of(CalibratorModel::CcacT {
            model: adapted.clone(),
        })?;
        println!(
            "{:>4} {:>8.3} {:>8.3} {:>9.4} {:>9.4} {:>7.4} {:>6.1}",
            seed,
            pre.temperature,
            adapted.temperature,
            e_scratch,
            e_transfer,
            (e_scratch - e_transfer).abs(),
            t0.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
