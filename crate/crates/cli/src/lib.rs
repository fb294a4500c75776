//! Experiment runner for the `statecon` toolkit.
//!
//! Exit codes: 0 success, 1 config error, 2 tolerance failure, 3 numerical
//! abort.

// `!(a < b)` is used on purpose so NaN lands on the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod expr;
pub mod output;
pub mod problem;
pub mod suite;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use config::ConfigError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_TOLERANCE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(ConfigError),
    #[error("numerical abort: {0}")]
    Numerical(statecon::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<statecon::Error> for CliError {
    fn from(e: statecon::Error) -> Self {
        use statecon::Error as E;
        match e {
            E::NonFiniteState { .. } | E::AllPathsNonFinite { .. } | E::DegenerateWeights { .. } | E::OutOfRange(_) => {
                CliError::Numerical(e)
            }
            other => CliError::Config(ConfigError::at("arguments", other)),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => EXIT_CONFIG,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "statecon", version, about = "Monte Carlo experiments for state-constrained LQ control")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// JSON experiment config.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Built-in problem; replaces the config's problem.
    #[arg(long, global = true, value_name = "NAME")]
    pub problem: Option<String>,
    /// Master seed
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Number of paths (`simulate` defaults to 10)
    #[arg(long, global = true, value_name = "N")]
    pub paths: Option<usize>,
    /// Euler step
    #[arg(long, global = true, value_name = "X")]
    pub dt: Option<f64>,
    /// Worker threads. Results do not depend on it.
    #[arg(long, global = true, value_name = "N")]
    pub workers: Option<usize>,
    /// Disable the Brownian-bridge crossing test.
    #[arg(long, global = true)]
    pub no_bridge: bool,
    /// Cap on the norm of the optimal control.
    #[arg(long, global = true, value_name = "X")]
    pub clamp: Option<f64>,
    /// Output CSV; stdout if absent.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Omit the `generated_unix` header line.
    #[arg(long, global = true)]
    pub no_timestamp: bool,
}

#[derive(Debug, Clone, Args)]
pub struct PointArgs {
    /// Start time.
    #[arg(long, allow_negative_numbers = true)]
    pub t: Option<f64>,
    /// Start state, comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub x: Option<Vec<f64>>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate u and v at one point.
    Estimate(PointArgs),
    /// Estimate u and v on a set of points.
    Grid(commands::GridArgs),
    /// Trajectories of the optimally controlled state.
    Simulate(PointArgs),
    /// Expected cost of a feedback policy.
    Cost(commands::CostArgs),
    /// Run a named check suite.
    Verify(commands::VerifyArgs),
}

/// Parse `args`, run, write the table and return the exit code. Diagnostics
/// go to `stderr`; the table goes to `--out` or `stdout`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(stderr, "{}", e.render());
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{}", e.render());
                    EXIT_OK
                }
                _ => EXIT_CONFIG,
            };
        }
    };
    match commands::execute(&cli) {
        Err(e) => {
            let _ = writeln!(stderr, "statecon: {e}");
            e.exit_code()
        }
        Ok(outcome) => {
            for note in &outcome.notes {
                let _ = writeln!(stderr, "warning: {note}");
            }
            if let Err(e) = outcome.write(stdout) {
                let _ = writeln!(stderr, "statecon: {e}");
                return e.exit_code();
            }
            if outcome.failures.is_empty() {
                EXIT_OK
            } else {
                for f in &outcome.failures {
                    let _ = writeln!(stderr, "FAIL {f}");
                }
                EXIT_TOLERANCE
            }
        }
    }
}
