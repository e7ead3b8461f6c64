use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use evobvp::cli::{exit_code, parse_config_with, run_command, Command, Overrides};

/// Solver and verification harness for linear evolution equations
/// u' + A(t) u = f on [0, tau] with the boundary condition u(0) = Phi u(tau).
#[derive(Parser)]
#[command(name = "evobvp", version, about)]
struct Args {
    /// solve | certify | sweep | verify | model
    command: String,

    /// Problem description (TOML)
    #[arg(long)]
    config: PathBuf,

    /// Output directory for CSV files and reports
    #[arg(long, default_value = ".")]
    out: PathBuf,

    /// Override run.seed from the config
    #[arg(long)]
    seed: Option<u64>,

    /// Override time.steps from the config
    #[arg(long)]
    steps: Option<usize>,

    /// Override time.method (crank_nicolson | implicit_euler | rk4 | exact_autonomous)
    #[arg(long)]
    method: Option<String>,

    /// Suppress stdout reporting (files are still written)
    #[arg(long)]
    quiet: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();

    let cmd = match Command::parse(&args.command) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };

    let overrides = Overrides { seed: args.seed, steps: args.steps, method: args.method };
    let config = match parse_config_with(&args.config, &overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };

    match run_command(cmd, &config, &args.out, args.quiet) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
