//! Experiment orchestration: configuration, reports, artifact formats.

pub mod config;
pub mod experiment;
pub mod histogram;
pub mod io;
pub mod report;

pub use config::{CodebookSpec, ExperimentConfig};
pub use experiment::{run_experiment, ExperimentOutcome, SeedRun};
pub use histogram::{export_histogram, Bin, HistField, Histogram};
pub use report::{compare_runs, ComparisonReport, FlopsReport};
