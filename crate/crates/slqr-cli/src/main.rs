use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use slqr_cli::{commands, spec};

/// Discounted stochastic LQR experiment driver.
#[derive(Parser)]
#[command(name = "slqr", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Model-based offline policy iteration (Riccati solver).
    Solve {
        /// Path to the JSON experiment spec.
        spec: PathBuf,
        /// Override the spec's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Model-free batch Q-learning policy iteration.
    Learn {
        spec: PathBuf,
        /// Override the spec's master seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Admissibility, Lyapunov-equation, and cost report for a gain.
    Check {
        spec: PathBuf,
        /// Gain entries, row-major, comma-separated (m x n values).
        #[arg(long, allow_hyphen_values = true)]
        gain: String,
    },
    /// Run solve and learn, joining the traces on iteration index.
    Compare {
        spec: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve { spec: path, out } => {
            spec::load_spec(path).and_then(|s| commands::run_solve(&s, out.as_deref()))
        }
        Command::Learn {
            spec: path,
            seed,
            out,
        } => spec::load_spec(path).and_then(|s| commands::run_learn(&s, *seed, out.as_deref())),
        Command::Check { spec: path, gain } => {
            spec::load_spec(path).and_then(|s| commands::run_check(&s, gain))
        }
        Command::Compare {
            spec: path,
            seed,
            out,
        } => spec::load_spec(path).and_then(|s| commands::run_compare(&s, *seed, out.as_deref())),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code as u8)
        }
    }
}
