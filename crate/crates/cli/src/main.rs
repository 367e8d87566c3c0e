//! `decbayes`: runs decentralized Bayes filter experiments from JSON configs.
//!
//! Exit codes: 0 on success, 2 for configuration errors, 3 when a belief
//! collapses to zero mass during a run, 1 for anything else (I/O, malformed
//! result files).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use decbayes::config::ExperimentConfig;
use decbayes::experiment::{
    run_experiment, sweep, write_plotdata, write_run, write_standard_configs, ExperimentError,
};

#[derive(Parser)]
#[command(name = "decbayes", version, about = "Decentralized Bayes filter experiments on grid worlds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one config over its seeds and write episodes.csv, aggregate.csv and config.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Replace the config's seed list with 0..N.
        #[arg(long)]
        seeds: Option<u64>,
        /// Output directory; defaults to the config's output_path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every *.json config in a directory.
    Sweep {
        #[arg(long)]
        configs: PathBuf,
        /// Write each run to <out>/<task>/<variant> instead of its output_path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build per-metric plot tables from the run directories under --in.
    Plotdata {
        #[arg(long = "in")]
        input: PathBuf,
        /// Directory receiving cumulative_reward.csv, total_w1.csv and prey_w1.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the standard experiment grid (both tasks, all variants) as config files.
    InitConfigs {
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code(err: &ExperimentError) -> u8 {
    match err {
        ExperimentError::Config(_) => 2,
        ExperimentError::Episode { .. } => 3,
        _ => 1,
    }
}

fn execute(command: Command) -> Result<(), ExperimentError> {
    match command {
        Command::Run { config, seeds, out } => {
            let mut config = ExperimentConfig::load(&config)?;
            if let Some(n) = seeds {
                config.seeds = (0..n).collect();
            }
            let dest = out.unwrap_or_else(|| config.output_path.clone());
            let output = run_experiment(&config)?;
            write_run(&output, &dest)?;
            let last = output.aggregate.last().expect("horizon is positive");
            println!(
                "{} {}: {} seeds, final mean cumulative_reward {:.3}, total_w1 {:.3} -> {}",
                output.config.task.name(),
                output.config.variant,
                output.streams.len(),
                last.cumulative_reward,
                last.total_w1,
                dest.display()
            );
        }
        Command::Sweep { configs, out } => {
            for dir in sweep(&configs, out.as_deref())? {
                println!("{}", dir.display());
            }
        }
        Command::Plotdata { input, out } => {
            for path in write_plotdata(&input, &out)? {
                println!("{}", path.display());
            }
        }
        Command::InitConfigs { out } => {
            for path in write_standard_configs(&out)? {
                println!("{}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            if let ExperimentError::Episode { failed_seeds, .. } = &err {
                eprintln!("failed seeds: {failed_seeds:?}");
            }
            ExitCode::from(exit_code(&err))
        }
    }
}
