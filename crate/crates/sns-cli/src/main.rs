//! `snsbench` — benchmark harness for the stochastic Stokes / Navier-Stokes
//! solvers. Thin argument layer; all logic lives in the library.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sns_cli::config::RunConfig;
use sns_cli::{commands, init_threads, CliError};

#[derive(Parser)]
#[command(name = "snsbench", about = "Stochastic Stokes / Navier-Stokes benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Path to the TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the sample count in the config.
    #[arg(long, global = true)]
    samples: Option<usize>,
    /// Overrides the output directory in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: SNSBENCH_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Strong/weak convergence tables, rate fits and plot data.
    Convergence,
    /// Pressure-gradient stability series and τ-exponent.
    Stability,
    /// Kinetic-energy trajectories and the pathwise identity residual.
    Energy,
    /// Lid-driven-cavity fields, probe marginals and energy statistics.
    Cavity,
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_threads(cli.threads);
    sns_core::init_deterministic_linear_algebra();
    let path = cli
        .config
        .ok_or_else(|| CliError::Config("--config <path> is required".into()))?;
    let text = std::fs::read_to_string(&path).map_err(CliError::Io)?;
    let mut cfg = RunConfig::parse(&text)?;
    if let Some(seed) = cli.seed {
        cfg.mc.seed = seed;
    }
    if let Some(samples) = cli.samples {
        cfg.mc.samples = samples;
    }
    if let Some(out) = cli.out {
        cfg.output.dir = out.to_string_lossy().into_owned();
    }
    let name = match cli.command {
        Command::Convergence => "convergence",
        Command::Stability => "stability",
        Command::Energy => "energy",
        Command::Cavity => "cavity",
    };
    commands::dispatch(name, &cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("snsbench: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
