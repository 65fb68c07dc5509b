//! Experiment harness: configuration, the code cache, trial runs,
//! verification suites and plots.

pub mod cache;
pub mod config;
pub mod experiment;
pub mod plot;
pub mod verify;

pub use cache::CodeCache;
pub use config::ExperimentConfig;
pub use experiment::{aggregate, run_trials, sweep, write_csv, Aggregate, TrialResult};
