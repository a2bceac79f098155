//! `l2d`: run the steering and speed pipeline from a flat config file.
//!
//! Failures print one line, `error[<class>]: <message>`, to stderr and
//! exit nonzero.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use l2d_core::{Error, Result};

use config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "l2d", version, about = "Camera and semantic-map fusion for steering angle and speed")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Sampling preset: full, sample1, sample2, sample3 or tiny.
    #[arg(long, global = true)]
    preset: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (output.dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override any config key, e.g. `--set train.epochs=1`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic dataset to dataset.root.
    GenSynth,
    /// Decode, resize and cache the dataset for the sampling preset.
    Preprocess,
    /// Train model.name; one checkpoint per epoch.
    Train,
    /// Predict predict.split with the checkpoint of predict.epoch.
    Predict,
    /// Combine member predictions with the ensemble spec.
    Ensemble,
    /// Score a prediction CSV overall and per zone.
    Evaluate {
        /// Prediction CSV; defaults to the model's predict.epoch output.
        #[arg(long)]
        pred: Option<PathBuf>,
        /// Ground-truth CSV in prediction format; defaults to the cached
        /// targets of eval.split.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Metric tables and loss-curve plots for everything under output.dir.
    Report,
    /// Print every config key with its default.
    Defaults,
}

fn resolve(g: &Global) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &g.config {
        cfg.apply_file(path)?;
    }
    cfg.apply_env(std::env::vars())?;
    if let Some(p) = &g.preset {
        cfg.set("sampling.preset", p)?;
    }
    if let Some(s) = g.seed {
        cfg.set("seed", &s.to_string())?;
    }
    if let Some(o) = &g.out {
        cfg.set("output.dir", &o.to_string_lossy())?;
    }
    for kv in &g.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    // Parse once up front so a bad preset fails before any work.
    cfg.parse::<l2d_core::ingest::SamplingPreset>("sampling.preset")?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<String> {
    if let Command::Defaults = cli.command {
        return Ok(config::documented_defaults());
    }
    let cfg = resolve(&cli.global)?;
    match &cli.command {
        Command::GenSynth => commands::gen_synth(&cfg),
        Command::Preprocess => commands::preprocess(&cfg),
        Command::Train => commands::train_cmd(&cfg),
        Command::Predict => commands::predict_cmd(&cfg),
        Command::Ensemble => commands::ensemble_cmd(&cfg),
        Command::Evaluate { pred, truth } => commands::evaluate(&cfg, pred.as_deref(), truth.as_deref()),
        Command::Report => commands::report(&cfg),
        Command::Defaults => unreachable!(),
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error[usage]: {}", one_line(first));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(msg) => {
            println!("{}", msg.trim_end());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error[{}]: {}", e.class(), one_line(&e.to_string()));
            ExitCode::FAILURE
        }
    }
}
