//! Experiment driver for `cvqkd-cs`: configuration, parameter sweeps and
//! CSV reports.

pub mod config;
pub mod report;
pub mod sweep;

pub use config::{load_config, parse_config, ConfigError, EstimatorKind, ExperimentConfig, Preset};
pub use report::{compute_mse, write_reports, RunReport};
pub use sweep::{run_sweep, Stages};
