//! `capflow` — volume-preserving capillary interface evolution on a grid.
//!
//! Exit codes: 0 when the command succeeded and all checks passed, 2 when
//! the command ran but a verification check failed, 1 on configuration or
//! runtime errors.

mod commands;
mod config;
mod output;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "capflow",
    version,
    about = "Volume-preserving capillary interface evolution on a half-space grid"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one flow described by a JSON config; emit trace.csv,
    /// diagnostics.csv, PGM snapshots and a manifest.
    Run {
        /// Path to the JSON configuration.
        config: PathBuf,
        /// Output directory (default: "<config stem>_out" next to the cwd).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run one config over a ladder of finer steps and grids and emit
    /// the cross-level comparison report.
    Study {
        /// Path to the JSON configuration of the coarsest level.
        config: PathBuf,
        /// Number of levels (at least 2; each halves the step length).
        #[arg(long)]
        levels: usize,
        /// Output directory (default: "<config stem>_study" next to the cwd).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare the cut solver, the stepper and the distance transform
    /// against exhaustive reference implementations on small grids.
    Oracle {
        /// Grid side length for the enumeration suites (2 to 5).
        #[arg(long, default_value_t = 4)]
        size: usize,
        /// Number of randomized cut-solver trials; the stepper suite runs
        /// half as many and the distance suite a fixed twenty.
        #[arg(long, default_value_t = 100)]
        trials: usize,
        /// Seed of the randomized instances.
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Deliberately corrupt one solve per trial (negative control:
        /// the suite must then fail).
        #[arg(long, hide = true)]
        corrupt: bool,
    },
    /// Re-verify an emitted run directory: file hashes against the
    /// manifest, recorded checks, and the invariants recoverable from
    /// trace.csv alone.
    Diagnose {
        /// Directory previously produced by `capflow run`.
        trace_dir: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.cmd {
        Cmd::Run { config, out } => commands::cmd_run(&config, out.as_deref()),
        Cmd::Study { config, levels, out } => {
            commands::cmd_study(&config, levels, out.as_deref())
        }
        Cmd::Oracle { size, trials, seed, corrupt } => {
            commands::cmd_oracle(size, trials, seed, corrupt)
        }
        Cmd::Diagnose { trace_dir } => commands::cmd_diagnose(&trace_dir),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
