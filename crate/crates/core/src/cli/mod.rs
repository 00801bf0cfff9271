//! The `cpgp` command-line front end.
//!
//! Every subcommand reads an optional TOML config, applies flag overrides and
//! writes its artifacts under `--out`. Errors print one line on stderr and
//! map to exit codes: 2 config or parse, 3 data, 4 numerical, 5 optimization.

pub mod commands;
pub mod config;
pub mod csvio;
pub mod dsl;
pub mod model;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use self::commands::Invocation;
use self::config::{RunConfig, SynthKind};
use crate::error::Result;

#[derive(Debug, Parser)]
#[command(name = "cpgp", version, about = "Gaussian-process regression with change-point kernels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for every random choice; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Input data CSV; overrides `data.path`.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct Split {
    /// Random training fraction when the data has no train column.
    #[arg(long)]
    train_frac: Option<f64>,
    /// Train on every k-th row when the data has no train column.
    #[arg(long)]
    decimate: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Kind {
    Regime,
    Oscillator,
    Changepoint,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a model and write model.json, fit_report.json and run_meta.json.
    Fit {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        split: Split,
    },
    /// Write predictions.csv for every row of the data file.
    Predict {
        #[command(flatten)]
        common: Common,
        /// Model file; defaults to <out>/model.json.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Score held-out rows and write score.json.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        split: Split,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Score an existing predictions CSV instead of running the model.
        #[arg(long)]
        predictions: Option<PathBuf>,
        /// Also write switch_<tag>.csv sigmoid curves.
        #[arg(long)]
        curves: bool,
    },
    /// Generate a synthetic dataset (data.csv) with its ground truth (truth.csv).
    Synth {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        split: Split,
        #[arg(long, value_enum)]
        kind: Option<Kind>,
    },
    /// Compare analytic and finite-difference objective gradients.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        split: Split,
    },
    /// Draw prior samples of the configured kernel on a 1-D grid.
    Sample {
        #[command(flatten)]
        common: Common,
    },
}

fn invocation(common: Common, split: Option<Split>) -> Result<Invocation> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(split) = split {
        if split.train_frac.is_some() {
            cfg.data.train_frac = split.train_frac;
        }
        if split.decimate.is_some() {
            cfg.data.decimate = split.decimate;
        }
    }
    let out = common.out.or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("."));
    Ok(Invocation {
        cfg,
        out,
        seed_overridden: common.seed.is_some(),
        model: None,
        data: common.data,
        predictions: None,
        curves: false,
        kind: None,
    })
}

fn dispatch(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Fit { common, split } => commands::fit(&invocation(common, Some(split))?),
        Command::Predict { common, model } => {
            let inv = Invocation { model, ..invocation(common, None)? };
            commands::predict(&inv)
        }
        Command::Evaluate { common, split, model, predictions, curves } => {
            let inv = Invocation { model, predictions, curves, ..invocation(common, Some(split))? };
            commands::evaluate(&inv)
        }
        Command::Synth { common, split, kind } => {
            let kind = kind.map(|k| match k {
                Kind::Regime => SynthKind::Regime,
                Kind::Oscillator => SynthKind::Oscillator,
                Kind::Changepoint => SynthKind::Changepoint,
            });
            let inv = Invocation { kind, ..invocation(common, Some(split))? };
            commands::synth(&inv)
        }
        Command::Gradcheck { common, split } => commands::gradcheck(&invocation(common, Some(split))?),
        Command::Sample { common } => commands::sample(&invocation(common, None)?),
    }
}

/// Run the CLI on `args` (program name first) and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            e.exit_code()
        }
    }
}
