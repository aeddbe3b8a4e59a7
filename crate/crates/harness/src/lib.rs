//! Experiment harness: configuration parsing, instance presets, the run
//! loop with CSV/summary/SVG emission, and the `ail` command line.

pub mod classfile;
pub mod cli;
pub mod config;
pub mod presets;
pub mod runner;
pub mod svg;

pub use config::{load_config, parse_config, ConfigError, ExperimentConfig, Kind, Violation};
pub use runner::{run_experiment, Bundle};
