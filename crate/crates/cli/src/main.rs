//! `schrodecay` command-line driver.
//!
//! Exit codes: 0 success, 1 validation failure, 2 usage or configuration error.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

pub use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Validation(String),
    #[error(transparent)]
    Core(#[from] schrodecay::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use schrodecay::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::Validation(_) => 1,
            CliError::Io(_) => 2,
            CliError::Core(e) => match e {
                E::InvalidGrid(_)
                | E::InvalidArgument(_)
                | E::GridMismatch(_)
                | E::Format(_)
                | E::Io(_)
                | E::NotThreeDimensional(_)
                | E::TooLarge { .. } => 2,
                _ => 1,
            },
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "schrodecay", version, about = "Littlewood-Paley calculus and dispersive decay experiments for H = -Δ + V")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Global {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory for JSON/CSV/field files.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Validate inputs and print the plan without computing.
    #[arg(long, global = true)]
    pub dry_run: bool,
}

#[derive(Debug, Clone, Args)]
pub struct IndexArgs {
    /// Field file to measure.
    #[arg(long)]
    pub field: PathBuf,
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: f64,
    /// Integrability exponent; `inf` for ∞.
    #[arg(long)]
    pub p: f64,
    /// Summability exponent; `inf` for ∞.
    #[arg(long)]
    pub q: f64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check partition of unity, supports and derivative scaling of the dyadic system.
    ValidateDyadic {
        #[arg(long, default_value_t = 8)]
        j_max: usize,
        #[arg(long, default_value_t = 256)]
        samples: usize,
    },
    /// Kato norm, Rollnik functional and hypothesis verdict for the configured potential.
    PotentialCheck,
    /// Operator-adapted Besov norm of a field.
    Besov(IndexArgs),
    /// Operator-adapted Triebel-Lizorkin norm of a field.
    Triebel(IndexArgs),
    /// Kato norm and Kato-class profile of the configured potential.
    Kato {
        /// Profile radii, decreasing; defaults to halving from L/4.
        #[arg(long, value_delimiter = ',')]
        deltas: Vec<f64>,
    },
    /// Monte-Carlo Rollnik functional of the configured potential.
    Rollnik {
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Propagate a field and write one field file per time plus a manifest.
    Propagate {
        #[arg(long)]
        field: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        times: Vec<f64>,
        #[arg(long, value_enum, default_value_t = Method::Chebyshev)]
        method: Method,
    },
    /// Run the experiments listed in the config.
    Experiment,
    /// Run the acceptance suite.
    Suite {
        /// Criterion ids to run (default: all).
        #[arg(long, value_delimiter = ',')]
        only: Vec<u32>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Method {
    Chebyshev,
    Dense,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::dispatch(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
