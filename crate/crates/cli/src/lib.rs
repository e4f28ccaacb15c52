//! Manifest validation and subcommand bodies for the `mirflow` binary.

pub mod commands;
pub mod manifest;

pub use manifest::{library_inputs, ManifestError, RunManifest};
