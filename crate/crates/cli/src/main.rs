mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Neuron-level semantic slicing and slice-driven maintenance.
#[derive(Parser, Debug)]
#[command(name = "nslice", version)]
struct Cli {
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory (overrides the config's `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for sweeps.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a network and write `model.nsl`.
    Train {
        /// Train on the task-A categories of the incdev section only.
        #[arg(long)]
        task_a: bool,
    },
    /// Slice a trained network and write `slice.json`.
    Slice {
        #[arg(long)]
        model: PathBuf,
        /// Score on the task-A categories only.
        #[arg(long)]
        task_a: bool,
    },
    /// Band-masking accuracy tables.
    Pilot {
        #[arg(long)]
        model: PathBuf,
        /// Use this contribution map instead of computing the configured ones.
        #[arg(long)]
        map: Option<PathBuf>,
    },
    /// Remove non-retained neurons; optionally compare pruning runs.
    Restructure {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        /// Also run magnitude pruning with and without restructuring.
        #[arg(long)]
        prune: bool,
    },
    /// Adversarial re-adaptation of the retained neurons.
    Readapt {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        mask: PathBuf,
    },
    /// Learn task B with the task-A slice frozen.
    Incdev {
        /// Network trained on task A (`train --task-a`).
        #[arg(long)]
        model: PathBuf,
        /// Slice of the task-A network (`slice --task-a`).
        #[arg(long)]
        mask: PathBuf,
    },
    /// Compression/accuracy points for every strategy and metric.
    Sweep {
        #[arg(long)]
        model: PathBuf,
        /// Comma-separated Θ values for the semantic strategy.
        #[arg(long, value_delimiter = ',')]
        thetas: Option<Vec<f64>>,
        /// Comma-separated kept fractions for the top-k strategies.
        #[arg(long, value_delimiter = ',')]
        kfracs: Option<Vec<f64>>,
    },
    /// Collect report JSON files into one sorted CSV.
    Report {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("NSLICE_LOG", "warn")).init();
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
