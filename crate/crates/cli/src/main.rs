//! `dsbm`: generate, track, fit and predict dynamic blockmodel runs.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{OutputFormat, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(dsbm::Error),
    #[error("numerical failure: {0}")]
    Numerical(dsbm::Error),
    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Numerical(_) => 3,
            _ => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "dsbm", version, about = "Dynamic stochastic blockmodel runs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    format: Option<OutputFormat>,
    #[arg(long)]
    node_count: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    /// Edge-list file (`t i j` per line).
    #[arg(long)]
    edges: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample a synthetic sequence with its ground truth.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Filter block probabilities with known classes.
    Track {
        #[command(flatten)]
        common: Common,
        /// Class file (`i c_i` per line).
        #[arg(long)]
        classes: Option<PathBuf>,
        #[arg(long)]
        confidence_level: Option<f64>,
    },
    /// Fit classes and block probabilities jointly, step by step.
    Fit {
        #[command(flatten)]
        common: Common,
    },
    /// Predict each snapshot from its past and evaluate the ROC.
    Predict {
        #[command(flatten)]
        common: Common,
        /// `estimates.json` from `track` or `fit`.
        #[arg(long)]
        estimates: Option<PathBuf>,
        #[arg(long)]
        lambda: Option<f64>,
        /// Fixed combination weight; selected on a validation prefix when absent.
        #[arg(long)]
        eta: Option<f64>,
    },
    /// ROC of an arbitrary score file against one snapshot.
    EvalRoc {
        #[command(flatten)]
        common: Common,
        /// Score file (`i j score` per line; unlisted pairs score 0).
        #[arg(long)]
        scores: Option<PathBuf>,
        /// 1-based snapshot index to evaluate against.
        #[arg(long)]
        time: Option<usize>,
    },
}

fn resolve(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(format) = common.format {
        cfg.format = format;
    }
    if common.node_count.is_some() {
        cfg.node_count = common.node_count;
    }
    if common.k.is_some() {
        cfg.k = common.k;
    }
    if common.edges.is_some() {
        cfg.edges = common.edges.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate { common, steps } => {
            let mut cfg = resolve(&common)?;
            if let Some(steps) = steps {
                cfg.generator.steps = steps;
            }
            commands::generate(&cfg, &common.out)
        }
        Command::Track {
            common,
            classes,
            confidence_level,
        } => {
            let mut cfg = resolve(&common)?;
            if classes.is_some() {
                cfg.classes = classes;
            }
            if let Some(level) = confidence_level {
                cfg.confidence_level = level;
            }
            commands::track(&cfg, &common.out)
        }
        Command::Fit { common } => commands::fit(&resolve(&common)?, &common.out),
        Command::Predict {
            common,
            estimates,
            lambda,
            eta,
        } => {
            let mut cfg = resolve(&common)?;
            if estimates.is_some() {
                cfg.estimates = estimates;
            }
            if let Some(lambda) = lambda {
                cfg.predict.lambda = lambda;
            }
            if eta.is_some() {
                cfg.predict.eta = eta;
            }
            commands::predict(&cfg, &common.out)
        }
        Command::EvalRoc {
            common,
            scores,
            time,
        } => {
            let mut cfg = resolve(&common)?;
            if scores.is_some() {
                cfg.scores = scores;
            }
            if time.is_some() {
                cfg.eval_time = time;
            }
            commands::eval_roc(&cfg, &common.out)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dsbm: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
