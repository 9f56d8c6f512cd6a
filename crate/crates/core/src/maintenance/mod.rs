//! Slice-driven maintenance: restructuring, adversarial re-adaptation,
//! incremental task development, a magnitude pruner and the masking pilot.

mod incremental;
mod pilot;
mod prune;
mod readapt;
mod report;
mod restructure;

pub use incremental::{dual_inference, incremental_develop, retrain_baseline, IncrementalConfig, Task};
pub use pilot::{default_bands, pilot_masking_eval, PilotRow, PilotTable};
pub use prune::{magnitude_prune, PruneConfig, PruneOutcome, PruneState};
pub use readapt::{readapt, ReadaptConfig};
pub use report::{write_reports_csv, MaintenanceReport};
pub use restructure::restructure;
