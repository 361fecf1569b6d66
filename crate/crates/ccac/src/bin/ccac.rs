//! Command-line front end: reproducible synthesis, fitting, evaluation,
//! and few-shot transfer of confidence calibrators.

use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use ccac::commands::{
    apply_overrides, cmd_eval, cmd_fit, cmd_synth, cmd_transfer, load_run_config, CalibratorKind,
    Overrides, RunConfig,
};

#[derive(Parser)]
#[command(
    name = "ccac",
    version,
    about = "Post-hoc confidence calibration with an auxiliary misclassification class"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic logit dataset.
    Synth(SharedArgs),
    /// Fit a calibrator on a dataset (split internally into
    /// train/validation/test).
    Fit(SharedArgs),
    /// Evaluate a fitted model over a dataset and write a metrics
    /// report with plot-ready tables.
    Eval(SharedArgs),
    /// Adapt a fitted CCAC-S model to new data from a small capped
    /// sample (temperature and last auxiliary layer only).
    Transfer(SharedArgs),
}

#[derive(Args)]
struct SharedArgs {
    /// JSON config file; a manifest written by an earlier run works
    /// too, replaying it exactly.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed (every internal seed derives from it).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Metric bin count.
    #[arg(long)]
    bins: Option<usize>,
    /// Calibrator kind: mp, ts, sb, dirichlet, ccac, ccac-s.
    #[arg(long)]
    kind: Option<CalibratorKind>,
    /// Dataset path (.csv or .jsonl).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Model file path.
    #[arg(long)]
    model: Option<PathBuf>,
}

impl SharedArgs {
    fn resolve(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => load_run_config(path)
                .with_context(|| format!("reading config {}", path.display()))?,
            None => RunConfig::default(),
        };
        apply_overrides(
            &mut cfg,
            &Overrides {
                seed: self.seed,
                out: self.out.clone(),
                bins: self.bins,
                kind: self.kind,
                data: self.data.clone(),
                model: self.model.clone(),
            },
        );
        Ok(cfg)
    }
}

fn run() -> anyhow::Result<PathBuf> {
    let cli = Cli::parse();
    let (name, args) = match &cli.command {
        Command::Synth(a) => ("synth", a),
        Command::Fit(a) => ("fit", a),
        Command::Eval(a) => ("eval", a),
        Command::Transfer(a) => ("transfer", a),
    };
    let cfg = args.resolve()?;
    let path = match cli.command {
        Command::Synth(_) => cmd_synth(&cfg),
        Command::Fit(_) => cmd_fit(&cfg),
        Command::Eval(_) => cmd_eval(&cfg),
        Command::Transfer(_) => cmd_transfer(&cfg),
    }
    .with_context(|| format!("{name} failed"))?;
    Ok(path)
}

fn main() {
    match run() {
        Ok(path) => println!("wrote {}", path.display()),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    }
}
