//! Fits the auxiliary-class calibrators (CCAC and CCAC-S) against the
//! max-probability and temperature-scaling baselines on synthetic data
//! with a confidently-wrong out-of-distribution block, and prints
//! test-set calibration (ECE) and misclassification detection (AUROC)
//! for each.
//!
//! Run with `cargo run --example fit_auxiliary`.

use std::time::Instant;

use ccac::baselines::fit_temperature;
use ccac::calibrators::{calibrated_confidences, fit_ccac, fit_ccacs, CalibratorModel, HyperGrid};
use ccac::dataset::{split, SplitSpec};
use ccac::metrics::{auroc, ece};
use ccac::net::TrainConfig;
use ccac::seeding::derive_seed;
use ccac::synth::{generate, SynthConfig};

fn main() -> ccac::Result<()> {
    let bins = 20;
    println!(
        "{:>4} {:>7} {:>8} {:>8} {:>9} {:>9} {:>9} {:>9} {:>10} {:>6}",
        "seed",
        "T",
        "ece_mp",
        "ece_ts",
        "ece_ccac",
        "ece_ccacs",
        "auroc_mp",
        "auroc_cc",
        "(l1,l2)",
        "secs"
    );
    for seed in 0..5 {
        let t0 = Instant::now();
        let data = generate(&SynthConfig {
            seed,
            ..SynthConfig::default()
        })?;
        let spec = SplitSpec {
            seed: derive_seed(seed, "split"),
            ..SplitSpec::default()
        };
        let (train, val, test) = split(&data, &spec)?;
        let k = train.k();

        let mp = CalibratorModel::Mp { k };
        let ts = CalibratorModel::Ts {
            k,
            model: fit_temperature(&train)?,
        };
        let cfg = TrainConfig {
            epochs: 60,
            batch_size: 256,
            learning_rate: 1e-2,
            seed: derive_seed(seed, "fit"),
        };
        let (ccac_model, sel) = fit_ccac(&train, &val, &HyperGrid::default(), &[20], &cfg)?;
        let (ccacs_model, _) = fit_ccacs(&train, &val, &HyperGrid::default(), &[k], &cfg)?;
        let ccac = CalibratorModel::Ccac { model: ccac_model };
        let ccacs = CalibratorModel::CcacS { model: ccacs_model };

        let eval = |m: &CalibratorModel| -> ccac::Result<(f64, f64)> {
            let outcomes = calibrated_confidences(m, &test)?;
            Ok((ece(&outcomes, bins)?, auroc(&outcomes)?))
        };
        let (e_mp, a_mp) = eval(&mp)?;
        let (e_ts, _) = eval(&ts)?;
        let (e_cc, a_cc) = eval(&ccac)?;
        let (e_cs, _) = eval(&ccacs)?;
        let t = match &ts {
            CalibratorModel::Ts { model, .. } => model.t,
            _ => unreachable!(),
        };
        println!(
            "{:>4} {:>7.3} {:>8.4} {:>8.4} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>10} {:>6.1}",
            seed,
            t,
            e_mp,
            e_ts,
            e_cc,
            e_cs,
            a_mp,
            a_cc,
            format!(
                "({},{})",
                sel.lambda1.unwrap_or(f64::NAN),
                sel.lambda2.unwrap_or(f64::NAN)
            ),
            t0.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
