//! `tlres`: batch pipelines for loaded transmission-line resonators.
//!
//! Exit codes: 0 success, 1 output I/O failure, 2 validation error,
//! 3 numerical failure, 4 low-confidence result under `--strict`.

mod commands;
mod config;
mod output;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::{Context, Report};
use crate::config::JobConfig;
use crate::output::{is_low_confidence, write_json, Envelope};

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Numerical(String),
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Validation(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "validation error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<tlres::Error> for CliError {
    fn from(e: tlres::Error) -> Self {
        if e.is_validation() {
            CliError::Validation(e.to_string())
        } else {
            CliError::Numerical(e.to_string())
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "tlres", version, about = "Loaded transmission-line resonator analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML job configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    /// Exit with code 4 when the result carries low-confidence flags.
    #[arg(long, global = true)]
    strict: bool,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Mode frequencies, participation and Q_i of a loaded line.
    Solve,
    /// Load value, f_open and loss tangent from measured modes.
    Calibrate,
    /// Notch circle fit of a measured trace.
    Extract,
    /// Synthesize a hanger trace and check the fit against the closed forms.
    Oracle,
    /// Monte Carlo checks, reference ensembles and dielectric-constant fits.
    Stats,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Calibrate => "calibrate",
            Command::Extract => "extract",
            Command::Oracle => "oracle",
            Command::Stats => "stats",
        }
    }
}

fn run(cli: &Cli) -> Result<bool, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Validation("--config is required".into()))?;
    let config = JobConfig::load(path)?;
    let seed = cli.seed.or(config.seed).unwrap_or(0);
    std::fs::create_dir_all(&cli.out).map_err(|e| CliError::Io(format!("{}: {e}", cli.out.display())))?;
    let base_dir = path.parent().unwrap_or_else(|| std::path::Path::new("."));
    let ctx = Context { config: &config, base_dir, out_dir: &cli.out, seed };

    let Report { result, flags, outputs } = match cli.command {
        Command::Solve => commands::solve(&ctx)?,
        Command::Calibrate => commands::calibrate(&ctx)?,
        Command::Extract => commands::extract(&ctx)?,
        Command::Oracle => commands::oracle(&ctx)?,
        Command::Stats => commands::stats(&ctx)?,
    };
    let low = is_low_confidence(&flags);
    let envelope = Envelope {
        schema_version: config::SCHEMA_VERSION,
        tool: "tlres",
        tool_version: env!("CARGO_PKG_VERSION"),
        command: cli.command.name(),
        seed,
        status: if low { "low_confidence" } else { "ok" },
        flags,
        config: &config,
        outputs,
        result,
    };
    write_json(&cli.out.join("result.json"), &envelope)?;
    Ok(low)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(low) if low && cli.strict => {
            eprintln!("result carries low-confidence flags");
            ExitCode::from(4)
        }
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
