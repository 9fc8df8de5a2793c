//! `ppisvrg` command-line experiments.
//!
//! Every subcommand reads a TOML experiment file, applies flag overrides,
//! writes its artifacts into the output directory together with
//! `config.toml` (the resolved configuration, re-runnable as is) and prints
//! the written paths as JSON. Failures print `{"error": {...}}` on stderr
//! and exit with status 1.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use config::{ExperimentConfig, Format, Overrides};

#[derive(Parser, Debug)]
#[command(name = "ppisvrg", version, about = "Prediction-powered variance-reduced optimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Experiment seed; every random stream derives from it.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for Monte Carlo repetitions.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Generate a synthetic dataset (CSV plus JSON metadata).
    Gen,
    /// Run one optimizer and write its trajectory.
    Optimize,
    /// Run SGD, SVRG, PPI-SVRG and PPI-SVRG++ on the same data and seed.
    Compare,
    /// Monte Carlo evaluation of the estimators across labeled fractions.
    Mc,
    /// Compare measured PPI-SVRG gaps with the theoretical upper bound.
    Bound,
}

#[derive(Debug, Serialize)]
pub struct CliError {
    kind: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    field: Option<String>,
    message: String,
}

impl CliError {
    pub fn config(field: Option<&str>, message: impl Into<String>) -> Self {
        Self { kind: "config", field: field.map(str::to_string), message: message.into() }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        Self { kind: "io", field: None, message: format!("{}: {err}", path.display()) }
    }
}

impl From<ppisvrg::Error> for CliError {
    fn from(err: ppisvrg::Error) -> Self {
        use ppisvrg::Error as E;
        let (kind, field) = match &err {
            E::Invalid { field, .. } => ("invalid", Some(field.to_string())),
            E::InvalidStepSize { .. } => ("invalid_step_size", Some("optimizer.eta".to_string())),
            E::Dimension { .. } => ("dimension", None),
            E::Empty(_) => ("empty", None),
            E::AuxUndefined(_) => ("aux_undefined", None),
            E::SeUndefined(_) => ("se_undefined", None),
            E::EpochOverflow { .. } => ("epoch_overflow", Some("optimizer.max_epoch_len".to_string())),
            E::Parse { .. } | E::Csv(_) | E::Json(_) => ("parse", None),
            E::Io(_) => ("io", None),
        };
        Self { kind, field, message: err.to_string() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", serde_json::json!({ "error": self }))
    }
}

fn run(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let path = cli.config.as_deref().ok_or_else(|| CliError::config(Some("config"), "--config PATH is required"))?;
    let overrides = Overrides { seed: cli.seed, out: cli.out.clone(), jobs: cli.jobs, format: cli.format };
    let cfg = ExperimentConfig::load(path, &overrides)?;
    let out = cfg.out_dir();
    std::fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    let mut written = match cli.command {
        Command::Gen => commands::gen(&cfg, &out)?,
        Command::Optimize => commands::optimize(&cfg, &out)?,
        Command::Compare => commands::compare(&cfg, &out)?,
        Command::Mc => commands::mc(&cfg, &out)?,
        Command::Bound => commands::bound(&cfg, &out)?,
    };
    written.push(commands::write_file(&out.join("config.toml"), cfg.to_toml().as_bytes())?);
    Ok(written)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(paths) => {
            println!("{}", serde_json::json!({ "written": paths }));
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("{err}");
            ExitCode::FAILURE
        }
    }
}
