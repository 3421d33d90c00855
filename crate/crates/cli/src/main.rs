//! Batch front-end for the entropy power inequality workbench.
//!
//! `epilab run <config.json>` executes the requested verifications and
//! writes report.json / report.csv; `epilab sweep <config.json>` repeats
//! them across a parameter range; `epilab catalog` lists the built-in
//! densities and verification ids. Exit code 0 means no violated
//! verification, 1 means at least one violation, 2 means the config or the
//! numerics failed.

mod config;
mod runner;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{ExperimentConfig, VERIFICATION_IDS};

#[derive(Parser)]
#[command(name = "epilab", version, about = "entropy power inequality workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the verifications of a config and write reports.
    Run {
        config: PathBuf,
        /// Output directory for report.json and report.csv.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run the verifications across the config's parameter sweep.
    Sweep {
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// List built-in densities, verification ids and sweep parameters.
    Catalog,
}

fn init_threads() {
    if let Ok(v) = std::env::var("EPILAB_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}

fn load(path: &std::path::Path) -> Result<ExperimentConfig, String> {
    ExperimentConfig::from_path(path)
}

fn finish(
    cfg: &ExperimentConfig,
    out: &std::path::Path,
    result: Result<runner::RunOutput, String>,
) -> ExitCode {
    match result {
        Ok(output) => {
            runner::print_table(&output);
            if let Err(e) = runner::write_outputs(out, cfg, &output) {
                eprintln!("error: cannot write reports: {e}");
                return ExitCode::from(2);
            }
            if output.any_violated() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn main() -> ExitCode {
    init_threads();
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, out } => match load(&config) {
            Ok(cfg) => finish(&cfg, &out, runner::execute_run(&cfg)),
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        },
        Command::Sweep { config, out } => match load(&config) {
            Ok(cfg) => {
                if cfg.sweep.is_none() {
                    eprintln!("error: sweep: config has no sweep section");
                    return ExitCode::from(2);
                }
                finish(&cfg, &out, runner::execute_sweep(&cfg))
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        },
        Command::Catalog => {
            println!("grid density catalog:");
            for entry in epilab_core::density::catalog::CATALOG {
                let params: Vec<String> = entry
                    .params
                    .iter()
                    .map(|(name, default)| format!("{name} (default {default})"))
                    .collect();
                println!("  {:<22} {} [params: {}]", entry.id, entry.description, params.join(", "));
            }
            println!("analytic densities: kind = \"gaussian\" with mean, cov, n, d");
            println!("verification ids:");
            for id in VERIFICATION_IDS {
                println!("  {id}");
            }
            println!("sweep parameters:");
            for (name, what) in ExperimentConfig::sweep_parameters() {
                println!("  {name:<6} {what}");
            }
            ExitCode::SUCCESS
        }
    }
}
