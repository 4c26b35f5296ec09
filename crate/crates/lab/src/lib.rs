//! Experiment driver for the cyclic Toda metric solver: configuration,
//! pipelines, reports and CSV artifacts behind the `higgslab` binary.

pub mod config;
pub mod output;
pub mod pipeline;
pub mod report;

pub use config::{ConfigError, ExperimentConfig};
pub use pipeline::{run, Command, LabError, LabRun};
pub use report::{Check, RunReport, Verdict};
