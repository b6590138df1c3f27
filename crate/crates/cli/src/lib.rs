//! Experiment driver for `ironfi`: structured configs in, CSV artifacts out.
//!
//! Each subcommand reads one TOML [`config::ExperimentConfig`] and writes its
//! artifacts into the configured output directory. See the `configs/`
//! directory of the repository for annotated examples.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod error;
pub mod selftest;

pub use error::{CliError, Result};
