//! `qudit`: config-driven simulation and data analysis for transmon qudits.
//!
//! Every command reads one JSON configuration (strictly validated), runs a
//! single analysis stage, prints a deterministic report to stdout, and
//! mirrors artifacts into the output directory. Exit codes classify
//! failures: 2 for configuration, 3 for input data, 4 for numerics.

mod commands;
mod config;
mod error;
mod io;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::readout::ReadoutArgs;
use error::Result;
use report::{Ctx, Format};

#[derive(Parser)]
#[command(name = "qudit", version, about = "Transmon-qudit simulation and data analysis")]
struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true, default_value = "configs/device.json")]
    config: PathBuf,

    /// Output directory; overrides `io.out_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Synthesis seed; overrides `io.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Stdout format for the report.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Bare and dressed spectra with dispersive shifts.
    Spectrum,
    /// Charge-dispersion amplitude per transition.
    Dispersion {
        /// Measured parity splittings to compare against (JSON).
        #[arg(long)]
        measured: Option<PathBuf>,
        /// Allowed fractional excess before a splitting is flagged.
        #[arg(long, default_value_t = 0.05)]
        tolerance: f64,
    },
    /// Fit multi-level decay rates from population traces.
    DecayFit,
    /// Fit Ramsey fringes from time records.
    RamseyFit,
    /// Level populations from a spectrum or calibrated voltages.
    Readout {
        /// Transmission sweep CSV (`freq_ghz,re,im` or `freq_ghz,mag`).
        #[arg(long)]
        spectrum: Option<PathBuf>,
        /// Readout voltages CSV (`voltage`); needs `--calibration`.
        #[arg(long)]
        voltages: Option<PathBuf>,
        /// Calibration matrix JSON.
        #[arg(long)]
        calibration: Option<PathBuf>,
        /// Fitted rates JSON providing `g10` for the decay correction.
        #[arg(long)]
        rates: Option<PathBuf>,
    },
    /// Write a synthetic data corpus.
    GenFixtures,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    let loaded = config::load(&cli.config)?;
    let out_dir = cli.out.clone().or_else(|| loaded.config.io.out_dir.clone());
    let seed = cli.seed.unwrap_or(loaded.config.io.seed);
    let ctx = Ctx {
        config: loaded.config,
        config_sha256: loaded.sha256,
        out_dir,
        format: cli.format,
        seed,
    };

    match &cli.command {
        Command::Spectrum => commands::spectrum::run(&ctx),
        Command::Dispersion { measured, tolerance } => {
            commands::dispersion::run(&ctx, measured.as_deref(), *tolerance)
        }
        Command::DecayFit => commands::decay_fit::run(&ctx),
        Command::RamseyFit => commands::ramsey_fit::run(&ctx),
        Command::Readout {
            spectrum,
            voltages,
            calibration,
            rates,
        } => commands::readout::run(
            &ctx,
            &ReadoutArgs {
                spectrum: spectrum.as_deref(),
                voltages: voltages.as_deref(),
                calibration: calibration.as_deref(),
                rates: rates.as_deref(),
            },
        ),
        Command::GenFixtures => commands::gen_fixtures::run(&ctx),
    }
}
