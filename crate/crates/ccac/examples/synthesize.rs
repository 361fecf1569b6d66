//! Generates the synthetic logit benchmark and summarizes each block:
//! in-distribution rows the target net gets right with room to spare,
//! distribution-shifted rows near the decision boundary, and
//! out-of-distribution rows it labels confidently but has no ground
//! truth for. Writes the dataset in both supported formats.
//!
//! Run with `cargo run --example synthesize`.

use ccac::dataset::{predict, write_dataset, DataFormat};
use ccac::synth::{generate, SynthConfig};

fn main() -> ccac::Result<()> {
    let cfg = SynthConfig::default();
    let data = generate(&cfg)?;
    println!(
        "generated {} records with {} classes (seed {})\n",
        data.len(),
        data.k(),
        cfg.seed
    );

    let blocks = [
        ("in-distribution", 0, cfg.n_in),
        ("shifted", cfg.n_in, cfg.n_in + cfg.n_shift),
        ("out-of-distribution", cfg.n_in + cfg.n_shift, data.len()),
    ];
    println!(
        "{:<20} {:>6} {:>9} {:>10} {:>9}",
        "block", "rows", "labeled", "accuracy", "mean_mp"
    );
    for (name, lo, hi) in blocks {
        let rows = &data.records()[lo..hi];
        let mut labeled = 0usize;
        let mut correct = 0usize;
        let mut conf_sum = 0.0;
        for r in rows {
            let (y_hat, conf) = predict(&r.logits)?;
            conf_sum += conf;
            if let Some(y) = r.label {
                labeled += 1;
                if y == y_hat {
                    correct += 1;
                }
            }
        }
        let acc = if labeled == 0 {
            "    n/a".to_string()
        } else {
            format!("{:8.3}", correct as f64 / labeled as f64)
        };
        println!(
            "{:<20} {:>6} {:>9} {:>10} {:>9.3}",
            name,
            rows.len(),
            labeled,
            acc,
            conf_sum / rows.len() as f64
        );
    }

    write_dataset(&data, "synthetic.csv".as_ref(), DataFormat::Csv)?;
    write_dataset(&data, "synthetic.jsonl".as_ref(), DataFormat::Jsonl)?;
    println!("\nwrote synthetic.csv and synthetic.jsonl");
    Ok(())
}
