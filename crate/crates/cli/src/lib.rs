//! The `eefx` command line: instance I/O, the seeded generator, and the
//! analyze / solve / check / gen / verify subcommands.
//!
//! Exit codes: 0 success, 1 internal error, 2 parse or usage error, 3 size cap
//! exceeded, 4 solver audit failure, 5 verification violation.

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

pub mod commands;
pub mod files;
mod table;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_RESOURCE: i32 = 3;
pub const EXIT_AUDIT: i32 = 4;
pub const EXIT_VIOLATION: i32 = 5;

#[derive(Debug, Error)]
#[error("{message}")]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn new(code: i32, message: impl Into<String>) -> Self {
        CliError { code, message: message.into() }
    }

    pub fn parse(message: impl Into<String>) -> Self {
        CliError::new(EXIT_PARSE, message)
    }
}

impl From<eefx_core::Error> for CliError {
    fn from(e: eefx_core::Error) -> Self {
        let code = match &e {
            eefx_core::Error::Usage(_) => EXIT_PARSE,
            eefx_core::Error::Resource(_) => EXIT_RESOURCE,
            eefx_core::Error::Invariant(_) => EXIT_INTERNAL,
            eefx_core::Error::Audit { .. } => EXIT_AUDIT,
        };
        CliError::new(code, e.to_string())
    }
}

/// What a command printed and the exit code it asks for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub stdout: String,
    pub code: i32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Threshold {
    Theta,
    Rmms,
    Mms,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Random,
}

#[derive(Debug, Parser)]
#[command(name = "eefx", version, about = "Exact fair division: shares, envy checks and EFL+EEFX allocations")]
pub struct Cli {
    /// Output format for reports.
    #[arg(long, global = true, value_enum, default_value = "table")]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-agent MMS, MXS, θ and RMMS.
    Analyze {
        path: PathBuf,
        /// Rescale to integers and apply the 1/2-power perturbation first.
        #[arg(long)]
        perturb: bool,
        /// Include wall-clock timing (makes output non-reproducible).
        #[arg(long)]
        timing: bool,
    },
    /// Compute a complete EFL + EEFX allocation.
    Solve {
        path: PathBuf,
        /// Write the allocation file here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-agent thresholds for the lone divider. Only theta is guaranteed to work.
        #[arg(long, value_enum, default_value = "theta")]
        threshold: Threshold,
        /// Use the exhaustive search instead of the lone divider.
        #[arg(long)]
        oracle: bool,
        /// Assignment budget for --oracle.
        #[arg(long, default_value_t = eefx_core::oracle::DEFAULT_BUDGET)]
        budget: u64,
        /// Where to write the state dump when the audit fails.
        #[arg(long, default_value = "eefx-audit-dump.txt")]
        dump: PathBuf,
        #[arg(long)]
        timing: bool,
    },
    /// Run every checker on a given allocation.
    Check { instance: PathBuf, allocation: PathBuf },
    /// Write a seeded random instance with values uniform in 0..=vmax.
    Gen {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        agents: usize,
        #[arg(long, default_value_t = 8)]
        items: usize,
        #[arg(long, default_value_t = 20)]
        vmax: u64,
        /// Apply the 1/2-power perturbation so every agent is non-degenerate.
        #[arg(long)]
        non_degenerate: bool,
        /// Write to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the share chain, residual self-feasibility of θ, and the solver.
    Verify {
        /// Instance file; omit when using --suite.
        path: Option<PathBuf>,
        #[arg(long, value_enum)]
        suite: Option<Suite>,
        #[arg(long, default_value_t = 100)]
        count: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        agents: usize,
        #[arg(long, default_value_t = 8)]
        items: usize,
        #[arg(long, default_value_t = 20)]
        vmax: u64,
        /// Assignment budget for the exhaustive existence check (0 skips it).
        #[arg(long, default_value_t = eefx_core::oracle::DEFAULT_BUDGET)]
        budget: u64,
        /// Where to write the failing cases when a violation is found.
        #[arg(long, default_value = "eefx-verify-witness.json")]
        witness: PathBuf,
        #[arg(long)]
        timing: bool,
    },
}

pub fn run(cli: Cli) -> Result<Outcome, CliError> {
    let format = cli.format;
    match cli.command {
        Command::Analyze { path, perturb, timing } => commands::analyze(&path, perturb, timing, format),
        Command::Solve { path, out, threshold, oracle, budget, dump, timing } => {
            commands::solve(&commands::SolveArgs { path, out, threshold, oracle, budget, dump, timing }, format)
        }
        Command::Check { instance, allocation } => commands::check(&instance, &allocation, format),
        Command::Gen { seed, agents, items, vmax, non_degenerate, out } => {
            commands::gen(seed, agents, items, vmax, non_degenerate, out.as_deref())
        }
        Command::Verify { path, suite, count, seed, agents, items, vmax, budget, witness, timing } => {
            let source = match (path, suite) {
                (Some(p), None) => commands::VerifySource::File(p),
                (None, Some(Suite::Random)) => commands::VerifySource::Random { count, seed, agents, items, vmax },
                _ => return Err(CliError::parse("give either an instance path or --suite random")),
            };
            commands::verify(&source, budget, &witness, timing, format)
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_args<I, T>(args: I) -> Result<Outcome, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::parse(e.to_string()))?;
    run(cli)
}
