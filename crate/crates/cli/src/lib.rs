//! Command-line front end: TOML config in, JSON report and tables out.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;
pub mod units;

use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use lpgate::par::Exec;

pub use commands::{run, Command, Outcome};
pub use config::RunConfig;
pub use error::CliError;
pub use report::{Format, Report};

#[derive(Debug, Parser)]
#[command(
    name = "lpgate",
    version,
    about = "Design and verify trapped-ion gates on local phonon modes"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Calibrate the gate and report closed-form infidelities.
    Design(CommonArgs),
    /// Export the spin-dependent trajectories of one base interval.
    Trajectory(CommonArgs),
    /// Run the exact truncated-Fock simulation and its property checks.
    Verify(CommonArgs),
    /// Calibrate over a grid of one or two parameters.
    Scan(CommonArgs),
}

#[derive(Debug, Args, Clone)]
pub struct CommonArgs {
    /// TOML run configuration.
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    /// Worker threads; 1 runs sequentially.
    #[arg(long, value_name = "N", default_value_t = 1)]
    pub workers: usize,
    /// Table format.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

impl CliCommand {
    pub fn split(&self) -> (Command, &CommonArgs) {
        match self {
            CliCommand::Design(a) => (Command::Design, a),
            CliCommand::Trajectory(a) => (Command::Trajectory, a),
            CliCommand::Verify(a) => (Command::Verify, a),
            CliCommand::Scan(a) => (Command::Scan, a),
        }
    }
}

fn exec_for(workers: usize) -> Result<Exec, CliError> {
    if workers == 0 {
        return Err(CliError::Config("--workers must be at least 1".into()));
    }
    if workers == 1 {
        return Ok(Exec::Sequential);
    }
    #[cfg(feature = "parallel")]
    {
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global();
    }
    Ok(Exec::Parallel)
}

/// Load the config, run the command and write every output file.
pub fn execute(command: Command, args: &CommonArgs) -> Result<Report, CliError> {
    let start = Instant::now();
    let exec = exec_for(args.workers)?;
    let cfg = RunConfig::load(&args.config)?;
    let Outcome { mut report, tables } = run(command, &cfg, exec)?;
    report.timing.wall_seconds = start.elapsed().as_secs_f64();
    report.timing.workers = args.workers;
    report::write_all(&args.out, &report, &tables, args.format)?;
    Ok(report)
}
