use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use condshap::config::{ExperimentConfig, TEMPLATE};
use condshap::estimators::EstimatorRegistry;
use condshap::experiment::{explain_one, run_experiment};

#[derive(Parser)]
#[command(
    name = "condshap",
    version,
    about = "Conditional Shapley value benchmark"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full benchmark and write its artifacts.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Worker threads (default: all cores). Outputs do not depend on it.
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory, overriding the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a commented default configuration.
    InitConfig {
        #[arg(long)]
        out: PathBuf,
    },
    /// Explain one test observation with one method; prints JSON.
    Explain {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        obs: usize,
        /// Estimator label from the config, or a registered method name.
        #[arg(long)]
        method: String,
        #[arg(long)]
        threads: Option<usize>,
    },
}

const CONFIG_ERROR: u8 = 1;
const PIPELINE_ERROR: u8 = 2;

fn load(
    path: &Path,
    threads: Option<usize>,
    seed: Option<u64>,
) -> Result<ExperimentConfig, ExitCode> {
    let mut config = ExperimentConfig::load(path).map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(CONFIG_ERROR)
    })?;
    if threads.is_some() {
        config.threads = threads;
    }
    if let Some(seed) = seed {
        config.seed = seed;
    }
    config.validate().map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(CONFIG_ERROR)
    })?;
    Ok(config)
}

fn run(cli: Cli) -> Result<(), ExitCode> {
    let registry = EstimatorRegistry::with_builtins();
    match cli.command {
        Command::InitConfig { out } => std::fs::write(&out, TEMPLATE).map_err(|e| {
            eprintln!("error: cannot write {}: {e}", out.display());
            ExitCode::from(CONFIG_ERROR)
        }),
        Command::Run {
            config,
            threads,
            seed,
            out,
        } => {
            let mut config = load(&config, threads, seed)?;
            if let Some(out) = out {
                config.output_dir = out;
            }
            let outcome = run_experiment(&config, &registry).map_err(|e| {
                eprintln!("error: {e}");
                ExitCode::from(PIPELINE_ERROR)
            })?;
            for m in &outcome.report.methods {
                eprintln!("{:<24} overall MAE {:.4}", m.method, m.overall_mae);
            }
            Ok(())
        }
        Command::Explain {
            config,
            obs,
            method,
            threads,
        } => {
            let config = load(&config, threads, None)?;
            let explanation = explain_one(&config, &registry, obs, &method).map_err(|e| {
                eprintln!("error: {e}");
                ExitCode::from(PIPELINE_ERROR)
            })?;
            let json = serde_json::to_string_pretty(&explanation).map_err(|e| {
                eprintln!("error: {e}");
                ExitCode::from(PIPELINE_ERROR)
            })?;
            println!("{json}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(code) => code,
    }
}
