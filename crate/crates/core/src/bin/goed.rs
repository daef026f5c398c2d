use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use goed::experiment::{greedy_from_config, run_experiment, run_validation_suite, write_artifact, DesignMethod, ExperimentConfig};

#[derive(Parser)]
#[command(name = "goed", version, about = "Goal-oriented sensor placement for PDE inverse problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a full experiment from a TOML config and write its artifacts.
    Run {
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run the oracle validation suite and print the report as JSON.
    Validate {
        #[arg(long, default_value_t = 2024)]
        seed: u64,
    },
    /// Greedy design of size K for one criterion.
    Greedy {
        config: PathBuf,
        #[arg(long)]
        method: DesignMethod,
        #[arg(long)]
        k: usize,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cmd: Command) -> goed::Result<ExitCode> {
    match cmd {
        Command::Run { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let artifact = run_experiment(&cfg)?;
            let manifest = write_artifact(&artifact, &out)?;
            for f in &manifest.files {
                println!("{}", out.join(f).display());
            }
        }
        Command::Validate { seed } => {
            let report = run_validation_suite(seed);
            println!("{}", serde_json::to_string_pretty(&report)?);
            if !report.all_passed() {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Greedy { config, method, k } => {
            let cfg = ExperimentConfig::load(&config)?;
            let (search, estimate) = greedy_from_config(&cfg, method, k)?;
            let out = serde_json::json!({ "method": method.name(), "k": k, "search": search, "estimate": estimate });
            println!("{}", serde_json::to_string_pretty(&out)?);
        }
    }
    Ok(ExitCode::SUCCESS)
}
