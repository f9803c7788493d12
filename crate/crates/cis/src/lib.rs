//! Configuration, file formats and the command-line runner around
//! `cis-core`.
//!
//! The binary `cis` exposes five subcommands: `blg-check`, `reduce`,
//! `sample`, `compare` and `diagnose`. Each is also callable as a library
//! function from [`commands`].

pub mod commands;
pub mod config;
pub mod error;
pub mod formats;
pub mod problem;

pub use commands::Context;
pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};
