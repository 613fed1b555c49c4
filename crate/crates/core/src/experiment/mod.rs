//! Sweeps over (method, treatment, sparsity, seed), with CSV reports,
//! snapshots and SVG plots.

pub mod config;
pub mod plot;
pub mod report;
pub mod snapshot;
pub mod sweep;

pub use config::{ExperimentConfig, ScoringConfig, SeedSpec, SeedTuple, Stage};
pub use plot::{emit_plots, PlotOutcome};
pub use report::{read_csv, write_csv, CsvRow, CSV_HEADER};
pub use snapshot::{load_snapshot, save_snapshot, SnapshotMeta};
pub use sweep::{mean_avg_wd, run_sweep, run_sweep_with, Datasets, SweepOutcome};
