use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sqcool_cli::{run_scenario, validate_file, CliError, Output, RunOptions};

#[derive(Parser)]
#[command(name = "sqcool", version, about = "Feedback cooling with squeezed-light readout")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML).
    scenario: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for the artifacts.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form cooling predictions.
    Predict(Common),
    /// Time-domain simulation only.
    Simulate(Common),
    /// Simulation, spectra and lock-in analysis.
    Analyze(Common),
    /// Simulation, spectra and squashing fit.
    Fit(Common),
    /// Temperature sweep table.
    Sweep(Common),
    /// Every output listed in the scenario.
    Run(Common),
    /// Checks a scenario without running it.
    Validate {
        scenario: PathBuf,
    },
}

fn execute(common: Common, only: Option<&[Output]>) -> Result<(), CliError> {
    let options = RunOptions {
        seed: common.seed,
        out_dir: common.out_dir,
        only: only.map(|o| o.iter().copied().collect::<BTreeSet<_>>()),
        threads: common.threads,
    };
    let report = run_scenario(&common.scenario, &options)?;
    for (k, v) in &report.summary {
        println!("{k}={v}");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Predict(c) => execute(c, Some(&[Output::Predict])),
        Command::Simulate(c) => execute(c, Some(&[Output::Simulate])),
        Command::Analyze(c) => execute(c, Some(&[Output::Simulate, Output::Psd, Output::Lockin])),
        Command::Fit(c) => execute(c, Some(&[Output::Simulate, Output::Psd, Output::Fit])),
        Command::Sweep(c) => execute(c, Some(&[Output::SweepTable])),
        Command::Run(c) => execute(c, None),
        Command::Validate { scenario } => match validate_file(&scenario) {
            Ok(v) if v.is_empty() => {
                println!("ok");
                Ok(())
            }
            Ok(v) => Err(CliError::Schema(v)),
            Err(e) => Err(e),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit()
        }
    }
}
