//! Experiment harness: TOML configs, multi-arm optimizer runs on a shared
//! data stream, CSV/SVG outputs and theory checks over recorded runs.

pub mod config;
pub mod curves;
pub mod error;
pub mod io;
pub mod runner;

pub use config::{load_config, ExperimentConfig};
pub use error::{BenchError, BenchResult};
pub use runner::{run_experiment, write_outputs, ArmStatus, ExperimentResult};
