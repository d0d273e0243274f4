//! `causal-dr`: run the simulation study, estimate effects on a CSV file, or
//! run the self-check identities.
//!
//! Exit codes: 0 success, 1 self-check failure, 2 usage or data error.

mod config;
mod estimate;

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};

use causal_dr_core::report::{format_table, write_replications_csv, write_summary_csv};
use causal_dr_core::selfcheck::{run_selfcheck, Mutation};
use causal_dr_core::simulation::{run_simulation, summarize};

use config::{Manifest, SimulateArgs};
use estimate::EstimateArgs;

#[derive(Debug, Parser)]
#[command(name = "causal-dr", version, about = "Doubly robust and Bayesian average treatment effect estimators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the simulation study and write per-replication and summary CSVs.
    Simulate(SimulateArgs),
    /// Run estimators on a CSV dataset.
    Estimate(EstimateArgs),
    /// Check the exact identities on fixed small instances.
    Selfcheck {
        /// Corrupt the doubly robust residual weights to show a failing check.
        #[arg(long, value_parser = ["dr-residual-sign"])]
        mutate: Option<String>,
    },
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Check(String),
}

impl From<causal_dr_core::Error> for CliError {
    fn from(e: causal_dr_core::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Estimate(args) => estimate::run(args),
        Command::Selfcheck { mutate } => selfcheck(mutate.is_some()),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Check(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(1)
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn simulate(args: SimulateArgs) -> Result<(), CliError> {
    let (config, out) = args.resolve()?;
    config.validate()?;
    fs::create_dir_all(&out).map_err(|e| CliError::Usage(format!("cannot create {}: {e}", out.display())))?;

    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let clock = Instant::now();
    let rows = run_simulation(&config)?;
    let summary = summarize(&rows);
    let manifest = Manifest::new(&config, &rows, started, clock.elapsed().as_secs_f64());

    write_replications_csv(create(&out.join("replications.csv"))?, &rows)?;
    write_summary_csv(create(&out.join("summary.csv"))?, &summary)?;
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(out.join("manifest.json"), json + "\n")
        .map_err(|e| CliError::Usage(format!("cannot write manifest: {e}")))?;

    println!(
        "Scenario {}, n = {}, {} replications, seed {}",
        config.scenario, config.n, config.reps, config.seed
    );
    print!("{}", format_table(&summary));
    for (method, failed) in &manifest.failures {
        if *failed > 0 {
            eprintln!("warning: {method} failed in {failed} replication(s)");
        }
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Usage(format!("cannot create {}: {e}", path.display())))
}

fn selfcheck(mutate: bool) -> Result<(), CliError> {
    let mutation = if mutate { Mutation::DrResidualSign } else { Mutation::None };
    let checks = run_selfcheck(mutation);
    for c in &checks {
        println!("{}", c.line());
    }
    let failed: Vec<String> = checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| format!("{} (residual {:.3e})", c.name, c.residual))
        .collect();
    if failed.is_empty() {
        println!("all {} checks passed", checks.len());
        Ok(())
    } else {
        Err(CliError::Check(format!("failed checks: {}", failed.join(", "))))
    }
}
