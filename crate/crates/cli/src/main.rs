//! `eqfree`: scale-invariance detection, coarse renormalization and
//! similarity-exponent estimation for particles in a shear flow.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::ExperimentConfig;
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "eqfree", version, about)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
pub struct GlobalArgs {
    /// Flat `key = value` config file; unset keys keep their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Use closed-form references instead of simulation where available.
    #[arg(long, global = true)]
    oracle: bool,

    /// Worker thread cap.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output directory; overrides `out_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Newton search for the scale-invariance exponents (p, a).
    DetectInvariance,
    /// Coarse renormalization from a uniform start to the self-similar state.
    Renormalize {
        /// Take p from the last row of an invariance.csv.
        #[arg(long)]
        invariance: Option<PathBuf>,
    },
    /// Similarity exponent from a converged checkpoint.
    EstimateAlpha {
        /// Checkpoint file; defaults to `<out>/checkpoint_final.txt`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Take a from the last row of an invariance.csv.
        #[arg(long)]
        invariance: Option<PathBuf>,
    },
    /// Evolve a point source and dump the particles.
    Simulate,
}

fn load_config(args: &GlobalArgs) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            ExperimentConfig::parse(&text)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.global.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let cfg = load_config(&cli.global)?;
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| CliError::io(&cfg.out_dir, e))?;
    let oracle = cli.global.oracle;
    match cli.command {
        Command::DetectInvariance => commands::detect_invariance(&cfg, oracle),
        Command::Renormalize { invariance } => commands::renormalize(&cfg, invariance.as_deref()),
        Command::EstimateAlpha {
            checkpoint,
            invariance,
        } => commands::estimate_alpha(&cfg, oracle, checkpoint.as_deref(), invariance.as_deref()),
        Command::Simulate => commands::simulate(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
