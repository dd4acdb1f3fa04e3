//! Experiment harness for `adamb-core`: JSON configs, seeded multi-worker
//! sweeps with regret against a grid oracle, CSV and JSON outputs, and the
//! `adamb` command-line front end.

pub mod cli;
pub mod config;
pub mod error;
pub mod formats;
pub mod harness;

pub use config::ExperimentConfig;
pub use error::{LabError, Result};
