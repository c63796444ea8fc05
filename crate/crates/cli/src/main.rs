//! `teamlq`: batch front end for the team-LQ solvers.
//!
//! Subcommands: `solve` (Riccati kernels and mean field), `simulate`
//! (closed-loop Monte Carlo plus exact cost), `verify` (optimality
//! certificates), `compare` (centralized vs decentralized cost across a
//! coupling sweep). All take a JSON run config; outputs are CSV trajectories
//! and pretty-printed JSON reports with sorted keys. Exit codes: 0 success,
//! 1 runtime or failed check, 2 configuration/validation error.

mod commands;
mod errors;
mod output;
mod runconfig;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use errors::CliError;

#[derive(Parser)]
#[command(name = "teamlq", version, about = "Team-optimal LQ strategies: solve, simulate, verify, compare")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (a timestamped directory under ./runs by default).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Information structure to solve/simulate.
    #[arg(long, global = true, value_enum, default_value_t = Mode::Decentralized)]
    mode: Mode,

    /// Allow writing into a non-empty output directory.
    #[arg(long, global = true)]
    force: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Solve the kernels (and mean field) and write them as CSV.
    Solve,
    /// Simulate the closed loop and report Monte Carlo and exact costs.
    Simulate,
    /// Run stationarity, person-by-person and cost-ordering checks.
    Verify,
    /// Sweep the coupling strength and compare information structures.
    Compare,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Simulate => "simulate",
            Command::Verify => "verify",
            Command::Compare => "compare",
        }
    }
}

#[derive(ValueEnum, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Centralized,
    Decentralized,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out_dir = match output::resolve_out_dir(cli.out.clone(), cli.force, cli.command.name()) {
        Ok(dir) => dir,
        Err(err) => return fail(None, &err),
    };
    let result = run(&cli, &out_dir);
    match result {
        Ok(all_passed) => {
            if all_passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(err) => fail(Some(&out_dir), &err),
    }
}

fn run(cli: &Cli, out_dir: &std::path::Path) -> Result<bool, CliError> {
    let config_path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::usage("--config <file> is required"))?;
    let config = runconfig::RunConfig::load(config_path)?;
    let seed = cli.seed.unwrap_or(config.seed);
    match cli.command {
        Command::Solve => {
            commands::solve(&config, cli.mode, out_dir)?;
            Ok(true)
        }
        Command::Simulate => {
            commands::simulate(&config, cli.mode, seed, out_dir)?;
            Ok(true)
        }
        Command::Verify => commands::verify(&config, seed, out_dir),
        Command::Compare => {
            commands::compare(&config, out_dir)?;
            Ok(true)
        }
    }
}

fn fail(out_dir: Option<&std::path::Path>, err: &CliError) -> ExitCode {
    let json = err.to_json();
    eprintln!("{}", output::pretty(&json));
    if let Some(dir) = out_dir {
        let _ = output::write_json(&dir.join("error.json"), &json);
    }
    ExitCode::from(err.exit_code())
}
