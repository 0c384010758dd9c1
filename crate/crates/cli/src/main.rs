//! `hardy`: batch front-end for best constants of weighted Hardy sections.
//!
//! Exit codes: 0 success, 1 numerical failure (non-convergence, failed
//! exact verdicts), 2 invalid input.

mod commands;
mod config;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hardy_core::recurrence::{DEFAULT_C0, DEFAULT_L_HORIZON};
use hardy_core::solver::DEFAULT_TOL;
use hardy_core::{Error, Result};

use commands::Status;
use config::{RunConfig, Task, WeightSource};

#[derive(Parser, Debug)]
#[command(name = "hardy", version, about = "Best constants of finite weighted Hardy sections")]
struct Cli {
    /// Worker threads for sweeps (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Re-run the configuration echoed in a previous output file.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Write output here instead of stdout.
    #[arg(long, short, global = true, value_name = "FILE")]
    output: Option<PathBuf>,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Power weights lambda_k = k^alpha.
    #[arg(long, conflicts_with = "table")]
    alpha: Option<f64>,

    /// CSV file with a single `lambda` column.
    #[arg(long, value_name = "FILE")]
    table: Option<PathBuf>,

    /// Exponent p >= 2.
    #[arg(long, default_value_t = 2.0)]
    p: f64,
}

impl Common {
    fn weights(&self) -> Result<WeightSource> {
        match (self.alpha, &self.table) {
            (Some(alpha), None) => Ok(WeightSource::Power { alpha }),
            (None, Some(path)) => Ok(WeightSource::Table { path: path.clone() }),
            (None, None) => Ok(WeightSource::Power { alpha: 0.0 }),
            (Some(_), Some(_)) => Err(Error::InvalidInput("use either --alpha or --table".into())),
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check the growth conditions on the weights; JSON report.
    CheckWeights {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = DEFAULT_L_HORIZON)]
        horizon: usize,
    },
    /// Best constant mu_N for one N; JSON result.
    Solve {
        #[command(flatten)]
        common: Common,
        #[arg(long, short)]
        n: usize,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
    },
    /// mu_N for a list of N with the two-term prediction; CSV.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated section lengths.
        #[arg(long, short, value_delimiter = ',', required = true)]
        n: Vec<usize>,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
    },
    /// Recurrence against direct optimization for N = 1..=n-max; CSV.
    OracleCompare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n_max: usize,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        #[arg(long, default_value_t = 1e-12)]
        oracle_tol: f64,
    },
    /// Breakdown index, threshold index and log N estimate per mu; CSV.
    Breakdown {
        #[command(flatten)]
        common: Common,
        /// Comma-separated trial constants.
        #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
        mu: Vec<f64>,
        #[arg(long, default_value_t = 100_000_000)]
        cap: usize,
        #[arg(long, default_value_t = DEFAULT_C0)]
        c0: f64,
    },
}

impl Command {
    fn resolve(self) -> Result<RunConfig> {
        let (common, task) = match self {
            Command::CheckWeights { common, horizon } => (common, Task::CheckWeights { horizon }),
            Command::Solve { common, n, tol } => (common, Task::Solve { n, tol }),
            Command::Sweep { common, n, tol } => (common, Task::Sweep { n, tol }),
            Command::OracleCompare {
                common,
                n_max,
                tol,
                oracle_tol,
            } => (common, Task::OracleCompare { n_max, tol, oracle_tol }),
            Command::Breakdown { common, mu, cap, c0 } => (common, Task::Breakdown { mu, cap, c0 }),
        };
        Ok(RunConfig::new(common.weights()?, common.p, task))
    }
}

fn configure_threads(threads: Option<usize>) -> Result<()> {
    let Some(n) = threads else { return Ok(()) };
    if n == 0 {
        return Err(Error::InvalidInput("--threads must be at least 1".into()));
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    Ok(())
}

fn execute(cli: Cli) -> Result<Status> {
    configure_threads(cli.threads)?;
    let cfg = match (cli.config, cli.command) {
        (Some(_), Some(_)) => {
            return Err(Error::InvalidInput("--config replaces the subcommand; give one or the other".into()))
        }
        (Some(path), None) => RunConfig::parse_echo(&std::fs::read_to_string(path)?)?,
        (None, Some(cmd)) => cmd.resolve()?,
        (None, None) => return Err(Error::InvalidInput("a subcommand or --config is required".into())),
    };
    let mut out: Box<dyn Write> = match &cli.output {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    let status = commands::run(&cfg, &mut out);
    out.flush()?;
    status
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Failed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 2 } else { 1 })
        }
    }
}
