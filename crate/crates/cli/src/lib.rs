//! Command-line orchestration for persona population simulation.

pub mod commands;
pub mod config;
pub mod export;
pub mod run;

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use crate::config::{Overrides, RunConfig};
use crate::export::ExportKind;

#[derive(Debug, Parser)]
#[command(name = "persona-sim", version, about = "Simulate survey response distributions with persona populations")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// `mock` or `http`.
    #[arg(long, global = true)]
    pub backend: Option<String>,
    /// Root directory for run outputs.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Question catalog (TOML).
    #[arg(long, global = true)]
    pub catalog: Option<PathBuf>,
    /// Respondent table (CSV).
    #[arg(long, global = true)]
    pub respondents: Option<PathBuf>,
    /// Descriptor catalog (TOML).
    #[arg(long, global = true)]
    pub descriptors: Option<PathBuf>,
    /// Prompt mode: default, generic, country, value, fewshot, sociodemographic.
    #[arg(long, global = true)]
    pub mode: Option<String>,
    /// Personas per country.
    #[arg(long, global = true)]
    pub n: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load the survey data and report the questions passing the missingness filter.
    Ingest {
        /// Override dataset.max_missing_fraction.
        #[arg(long)]
        max_missing: Option<f64>,
    },
    /// Score every (country, question) cell and write the prediction dump.
    Simulate,
    /// Fit per-question temperatures by leave-one-question-out and apply them.
    Calibrate {
        #[arg(long = "predictions", required = true)]
        predictions: Vec<PathBuf>,
    },
    /// Compare predictions with the human distributions.
    Evaluate {
        #[arg(long = "predictions", required = true)]
        predictions: Vec<PathBuf>,
    },
    /// Attribute population MAE to persona items.
    Shapley,
    /// MAE across population sizes and repeated samples.
    SweepN,
    /// MAE and Wasserstein distance across temperatures, plain and tilted.
    SweepTemperature {
        #[arg(long = "predictions", required = true)]
        predictions: Vec<PathBuf>,
    },
    /// Write a long-format table for plotting.
    Export {
        /// mae_lines, variance_box, sample_size_curve, temperature_curves or map_points.
        #[arg(long)]
        kind: ExportKind,
        #[arg(long = "input", required = true)]
        input: Vec<PathBuf>,
    },
}

impl Cli {
    pub fn overrides(&self) -> Overrides {
        let g = &self.global;
        Overrides {
            seed: g.seed,
            backend: g.backend.clone(),
            out: g.out.clone(),
            catalog: g.catalog.clone(),
            respondents: g.respondents.clone(),
            descriptors: g.descriptors.clone(),
            max_missing_fraction: match &self.command {
                Command::Ingest { max_missing } => *max_missing,
                _ => None,
            },
            mode: g.mode.clone(),
            n: g.n,
        }
    }
}

/// What a command produced.
#[derive(Debug)]
pub enum Outcome {
    Ingest(commands::IngestSummary),
    Run(PathBuf),
}

pub fn init_workers(workers: usize) {
    if workers > 0 {
        // a pool may already exist when called twice in one process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global();
    }
}

pub fn execute(cli: &Cli) -> Result<Outcome> {
    let cfg = RunConfig::resolve(cli.global.config.as_deref(), &cli.overrides()).context("invalid configuration")?;
    init_workers(cfg.workers);
    Ok(match &cli.command {
        Command::Ingest { .. } => Outcome::Ingest(commands::cmd_ingest(&cfg)?),
        Command::Simulate => Outcome::Run(commands::cmd_simulate(&cfg)?),
        Command::Calibrate { predictions } => Outcome::Run(commands::cmd_calibrate(&cfg, predictions)?),
        Command::Evaluate { predictions } => Outcome::Run(commands::cmd_evaluate(&cfg, predictions)?),
        Command::Shapley => Outcome::Run(commands::cmd_shapley(&cfg)?),
        Command::SweepN => Outcome::Run(commands::cmd_sweep_n(&cfg)?),
        Command::SweepTemperature { predictions } => Outcome::Run(commands::cmd_sweep_temperature(&cfg, predictions)?),
        Command::Export { kind, input } => Outcome::Run(export::cmd_export(&cfg, *kind, input)?),
    })
}

pub fn print_ingest(s: &commands::IngestSummary) {
    println!("max missing fraction: {}", s.max_missing_fraction);
    for c in &s.countries {
        println!("{:<8} {} respondents", c.country, c.respondents);
    }
    println!("{} of {} questions pass the filter:", s.kept.len(), s.questions);
    for q in &s.kept {
        println!("  {q}");
    }
}
