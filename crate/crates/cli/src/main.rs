use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use klmc_cli::{run, CliError, ExperimentConfig, ExperimentKind, Overrides};

/// Kinetic Langevin Monte Carlo experiments.
#[derive(Parser)]
#[command(name = "klmc", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML config file; flags take precedence over its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; drawn from OS entropy and recorded when absent.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for report.json and CSV traces.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for multi-chain runs (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run independent chains and dump their states.
    Sample,
    /// Track W₂ to a quadratic target against the theoretical bound.
    Converge,
    /// Stationary bias against step size from the exact oracle.
    Order,
    /// Predicted versus measured contraction rates.
    Contraction,
    /// Step size and iteration counts for a target accuracy.
    Tune,
    /// Sweep of the LMC/KLMC preference regions.
    Regions,
}

impl Command {
    fn kind(&self) -> ExperimentKind {
        match self {
            Command::Sample => ExperimentKind::Sample,
            Command::Converge => ExperimentKind::Converge,
            Command::Order => ExperimentKind::Order,
            Command::Contraction => ExperimentKind::Contraction,
            Command::Tune => ExperimentKind::Tune,
            Command::Regions => ExperimentKind::Regions,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("error")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: --threads: {e}");
            return ExitCode::from(2);
        }
    }
    let mut cfg = match &cli.config {
        Some(path) => match ExperimentConfig::load(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("{e}");
                return ExitCode::from(2);
            }
        },
        None => ExperimentConfig::default(),
    };
    Overrides { seed: cli.seed, out: cli.out }.apply(&mut cfg);
    match run(cli.command.kind(), cfg) {
        Ok((report, out)) => {
            for w in &report.warnings {
                eprintln!("{w}");
            }
            println!("run {} (seed {}) written to {}", report.run_id, report.seed, out.display());
            ExitCode::SUCCESS
        }
        Err(e @ (CliError::Invalid(_) | CliError::Config(_))) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
