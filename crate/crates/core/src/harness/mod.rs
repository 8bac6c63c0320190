//! Multi-trial experiments: configuration, execution, statistics and reports.

pub mod config;
pub mod experiment;
pub mod regret;
pub mod report;
pub mod stats;

pub use config::{ExperimentConfig, Method};
pub use experiment::{run_experiment, Experiment, Objective};
pub use report::Summary;
