//! Experiment runner for quantum-like network synchronization.
//!
//! A run reads one JSON [`config::ExperimentConfig`], executes the selected
//! experiment and writes CSV tables plus a `manifest.json` into the output
//! directory.

pub mod config;
pub mod experiments;
pub mod manifest;

pub use config::{ExperimentConfig, ExperimentKind};
pub use experiments::{run_experiment, validate_spec, ValidationReport};
pub use manifest::{error_record, exit_code, git_blob_sha1, Manifest};
