//! Experiment configuration and the slicing sweep shared by the command line
//! tool and the acceptance runs.

mod config;
mod sweep;

pub use config::{
    DatasetSpec, ExperimentConfig, IncdevSpec, NetworkSpec, PilotSpec, PruneSpec, Split, Splits, SweepSpec,
    TOOL_VERSION,
};
pub use sweep::{best_metric, dominance, masked_accuracy, original_point, sweep, sweep_parallel, write_sweep_csv, Dominance, SweepPoint};
