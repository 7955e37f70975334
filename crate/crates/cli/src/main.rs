//! `atomfield`: pulse scattering simulations, parameter sweeps and
//! spectroscopy calibration from the command line.

// NaN-rejecting checks are written as `!(x > 0.0)` on purpose
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use atomfield_core::{Error, ErrorKind};
use clap::{Parser, Subcommand, ValueEnum};

use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{path}: {source}", path = .0.display(), source = .1)]
    Io(PathBuf, std::io::Error),
    #[error("csv: {0}")]
    Csv(csv::Error),
}

impl CliError {
    /// Core validation errors raised while building from config count as
    /// config errors.
    pub fn from_config(e: Error) -> Self {
        match e.kind() {
            ErrorKind::Config => CliError::Config(e.to_string()),
            _ => CliError::Core(e),
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) => match e.kind() {
                ErrorKind::Config => 2,
                ErrorKind::Numeric => 3,
                ErrorKind::Fit => 4,
            },
            CliError::Io(..) | CliError::Csv(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "atomfield", version, about = "Phase-shaped pulses on an atom at the end of a transmission line")]
struct Cli {
    /// TOML run configuration; defaults are used when omitted.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output.dir`).
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Axis {
    N,
    Theta,
    Duty,
    Fm,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one pulse and report the interaction efficiency.
    Simulate {
        /// Add moving-average filtered output columns with this window (ns).
        #[arg(long)]
        filter_ns: Option<f64>,
    },
    /// Sweep one modulation parameter.
    Sweep {
        #[arg(long, value_enum)]
        axis: Axis,
        /// Also write V_out and P_e resampled on a common time grid.
        #[arg(long)]
        grid: bool,
    },
    /// Fit qubit and line parameters from spectroscopy and a power sweep.
    Calibrate {
        /// Noise seed for synthetic data.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Closed-form efficiency, stationary reflection and loss.
    Analytic,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = RunConfig::load(cli.config.as_deref())?;
    let out = cli.out.unwrap_or_else(|| cfg.output.dir.clone());
    match cli.command {
        Command::Simulate { filter_ns } => commands::simulate(&cfg, &out, filter_ns),
        Command::Sweep { axis, grid } => commands::sweep(&cfg, &out, axis, grid),
        Command::Calibrate { seed } => commands::calibrate(&cfg, &out, seed),
        Command::Analytic => commands::analytic(&cfg, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
