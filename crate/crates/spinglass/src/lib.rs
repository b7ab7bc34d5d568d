//! Experiment runner for spherical spin glass samplers: TOML configs, deterministic seed
//! trees, JSON reports with content hashes, CSV traces and the `spinglass` command line.

pub mod config;
pub mod disorder;
pub mod error;
pub mod experiments;
pub mod measures;
pub mod report;
pub mod seeds;

pub use config::{Experiment, ExperimentConfig, MixtureConfig};
pub use error::{Result, RunError};
pub use experiments::{execute, run, Outcome, RunArtifacts};
pub use report::{report_schema_version, Check, Report, Trace};
pub use spinglass_core;
