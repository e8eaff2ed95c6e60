//! `flexhull` command-line tool.
//!
//! Exit codes: 0 success, 1 containment check failed, 2 infeasible,
//! 3 solver failure, 4 size budget refusal, 64 usage error, 65 input or
//! I/O error.

mod commands;
mod files;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use commands::{ProjectArgs, SolveArgs, SweepArgs, VerifyArgs};
use manifest::Run;

pub const EXIT_OK: u8 = 0;
pub const EXIT_VERIFY_FAILED: u8 = 1;
pub const EXIT_INFEASIBLE: u8 = 2;
pub const EXIT_SOLVER: u8 = 3;
pub const EXIT_BUDGET: u8 = 4;
pub const EXIT_USAGE: u8 = 64;
pub const EXIT_INPUT: u8 = 65;

#[derive(Parser, Debug)]
#[command(name = "flexhull", version, about = "Inner approximations of feeder flexibility regions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve one model and write the solution, a report and a manifest.
    Solve(SolveArgs),
    /// Check a solution against a model by sampling.
    Verify(VerifyArgs),
    /// Project a solution onto two periods.
    Project(ProjectArgs),
    /// Solve one model over a list of uncertainty levels.
    Sweep(SweepArgs),
    /// Repeat a solve or sweep recorded in a manifest.
    Rerun {
        manifest: PathBuf,
        /// Output directory for the repeated run.
        #[arg(long)]
        out: PathBuf,
    },
}

/// Command-line misuse detected after parsing.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn exit_code(err: &anyhow::Error) -> u8 {
    use flexhull::Error;
    if err.downcast_ref::<Usage>().is_some() {
        return EXIT_USAGE;
    }
    match err.downcast_ref::<Error>() {
        Some(Error::SizeBudget(_)) => EXIT_BUDGET,
        Some(Error::StaticInfeasible { .. }) => EXIT_INFEASIBLE,
        Some(Error::Solver { .. } | Error::Program(_)) => EXIT_SOLVER,
        _ => EXIT_INPUT,
    }
}

fn dispatch(command: Command, run: &mut Run) -> anyhow::Result<u8> {
    match command {
        Command::Solve(args) => commands::solve(args, run),
        Command::Verify(args) => commands::verify(args, run),
        Command::Project(args) => commands::project(args, run),
        Command::Sweep(args) => commands::sweep(args, run),
        Command::Rerun { manifest, out } => commands::rerun(&manifest, out, run),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let mut run = Run::start();
    let result = dispatch(cli.command, &mut run);
    let code = match &result {
        Ok(code) => *code,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(e)
        }
    };
    if let Err(e) = run.finish(code, result.err()) {
        eprintln!("error: writing manifest: {e:#}");
        return ExitCode::from(EXIT_INPUT);
    }
    ExitCode::from(code)
}
