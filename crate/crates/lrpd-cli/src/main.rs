//! Command-line driver: fits models to CSV matrices, reproduces the
//! experiment suites, and runs the theory checks.
//!
//! Exit codes: 0 success, 1 malformed input or unusable invocation, 2 solver
//! failure, 3 a theory check found its claimed invariant violated.
//!
//! Every run writes `manifest.json` recording the resolved parameters, the
//! root seed, a digest of the input matrix, and the library version;
//! `lrpd rerun --manifest <path>` replays it and reproduces the original
//! outputs byte for byte.
//!
//! Seed discipline: one root seed (`--seed`) is split into per-stage streams
//! with `derive_seed(root, stream)`; the stream numbers live in [`streams`]
//! so no two randomized stages ever share a generator.
//!
//! Output files land in `--out` when given, else `$LRPD_OUT_DIR`, else the
//! current directory. All files are written to a temp name first and renamed
//! into place.

mod decompose;
mod experiment;
mod manifest;
mod out;
mod rerun;
mod theory_cmd;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use std::process::ExitCode;

/// Stream numbers for `derive_seed(root, stream)`, one per randomized stage.
pub mod streams {
    /// Correlation k-means used to build a block partition.
    pub const PARTITION: u64 = 1;
    /// Sketch draws inside the stochastic solver.
    pub const SKETCH: u64 = 2;
    /// Random factor initialization of the gradient baseline.
    pub const GD_INIT: u64 = 3;
    /// Experiment instance `i` uses `INSTANCE + i`.
    pub const INSTANCE: u64 = 16;
    /// Theory trial `t` uses `TRIAL + 2t` (shape) and `TRIAL + 2t + 1` (draw).
    pub const TRIAL: u64 = 64;
}

#[derive(Debug)]
pub enum CliError {
    /// Unreadable or malformed input, unknown names, bad flag combinations.
    Input(String),
    /// A solver reported failure (divergence, lost definiteness, bad sketch).
    Solver(String),
    /// A theory check ran to completion and found the invariant violated.
    Invariant(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => 1,
            CliError::Solver(_) => 2,
            CliError::Invariant(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Solver(m) | CliError::Invariant(m) => m,
        }
    }
}

pub type CliResult = Result<(), CliError>;

pub fn input_err<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Input(e.to_string())
}

pub fn solver_err<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Solver(e.to_string())
}

#[derive(Parser)]
#[command(name = "lrpd", version, about = "Low-rank plus diagonal decomposition toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model to a dense symmetric matrix read from headerless CSV.
    Decompose(decompose::DecomposeArgs),
    /// Reproduce a named experiment and write its curves as tidy CSV.
    Experiment(experiment::ExperimentArgs),
    /// Run a theory check over seeded instances.
    Theory(theory_cmd::TheoryArgs),
    /// Replay a recorded run from its manifest.
    Rerun(rerun::RerunArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    let result = match cli.command {
        Command::Decompose(args) => decompose::run(&args),
        Command::Experiment(args) => experiment::run(&args),
        Command::Theory(args) => theory_cmd::run(&args),
        Command::Rerun(args) => rerun::run(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message());
            ExitCode::from(err.code())
        }
    }
}
