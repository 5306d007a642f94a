//! Experiment runner behind the `rarl` command.

pub mod artifacts;
pub mod config;
pub mod error;
pub mod plot;
pub mod runner;
pub mod stats;

pub use artifacts::{GeneratedArtifacts, Manifest};
pub use config::{build_config, load_config, AlgorithmKind, ExperimentConfig, Overrides};
pub use error::{CliError, CliResult};
pub use runner::{run_experiment, run_sweep};
