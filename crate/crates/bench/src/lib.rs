//! Experiment driver for the EMAC finite element solver: configuration,
//! runs, acceptance checks, CSV and gnuplot outputs, and the run manifest.

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;
pub mod plot;

pub use config::{ExperimentConfig, ExperimentId};
pub use error::{BenchError, Result};
pub use experiments::run_experiment;
pub use output::{write_report, Check, Report};
