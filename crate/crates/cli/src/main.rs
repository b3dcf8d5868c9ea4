//! `stepup`: schedules, exact DU worst cases, calibration, asymptotics and
//! Monte Carlo experiments from the command line.

mod args;
mod commands;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;
use stepup_core::exec::with_threads;

use crate::args::resolve;
use crate::error::CliError;
use crate::output::{emit, meta, Format, OutputFlags, Report};

#[derive(Parser)]
#[command(name = "stepup", version, about = "Step-up and step-down multiple testing toolkit")]
struct Cli {
    /// JSON object whose keys override the command's flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "STEPUP_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a critical-value schedule, optionally auditing it.
    Schedule(commands::ScheduleArgs),
    /// Run a step-up, step-down or adaptive test on a p-value CSV.
    Test(commands::TestArgs),
    /// Exact DU FDR curves and worst cases for capped schedules.
    DuTable(commands::DuTableArgs),
    /// Calibrate a1, k0 or a0.
    Calibrate(commands::CalibrateArgs),
    /// Asymptotic worst-case FDR of a rejection curve.
    Beta(commands::BetaArgs),
    /// Run a Monte Carlo experiment described in --config.
    Simulate(commands::SimulateArgs),
}

trait HasOutput {
    fn output(&self) -> &OutputFlags;
}

macro_rules! has_output {
    ($($t:ty),*) => {$(impl HasOutput for $t { fn output(&self) -> &OutputFlags { &self.output } })*};
}
has_output!(
    commands::ScheduleArgs,
    commands::TestArgs,
    commands::DuTableArgs,
    commands::CalibrateArgs,
    commands::BetaArgs,
    commands::SimulateArgs
);

fn dispatch<A>(
    cli: &Cli,
    name: &str,
    args: A,
    default: Format,
    run: fn(&A) -> Result<Report, CliError>,
) -> Result<u8, CliError>
where
    A: Serialize + DeserializeOwned + HasOutput + Send + Sync,
{
    let (args, resolved) = resolve(args, cli.config.as_deref())?;
    let report = match cli.threads {
        Some(t) => with_threads(t, || run(&args))?,
        None => run(&args)?,
    };
    emit(&report, args.output(), default, meta(name, &resolved, &report, cli.threads))?;
    Ok(report.exit)
}

fn run(cli: &Cli) -> Result<u8, CliError> {
    match &cli.command {
        Command::Schedule(a) => dispatch(cli, "schedule", a.clone(), Format::Csv, commands::schedule),
        Command::Test(a) => dispatch(cli, "test", a.clone(), Format::Json, commands::test),
        Command::DuTable(a) => dispatch(cli, "du-table", a.clone(), Format::Csv, commands::du_table),
        Command::Calibrate(a) => dispatch(cli, "calibrate", a.clone(), Format::Json, commands::calibrate),
        Command::Beta(a) => dispatch(cli, "beta", a.clone(), Format::Json, commands::beta),
        Command::Simulate(a) => dispatch(cli, "simulate", a.clone(), Format::Json, commands::simulate_cmd),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
