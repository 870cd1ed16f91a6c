//! Experiment harness for hybrid-dose tomography: end-to-end pipeline runs
//! with content-addressed artifacts, dose-allocation sweeps, uniform versus
//! hybrid comparisons and the `hdrec` command line.

pub mod commands;
pub mod compare;
pub mod config;
pub mod curves;
pub mod error;
pub mod manifest;
pub mod pipeline;
pub mod stages;
pub mod sweep;

pub use compare::{compare_uniform_vs_hybrid, split_budget, CompareReport, DoseSplit};
pub use config::RunConfig;
pub use curves::{emit_curves, read_points_csv};
pub use error::{CliError, Result};
pub use manifest::Manifest;
pub use pipeline::{run_pipeline, PipelineOutput};
pub use sweep::{run_sweep, SweepOutcome, SweepPlan, SweepPoint};
