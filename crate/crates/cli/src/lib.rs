//! Command-line front end for `dld-core`: file formats, experiment configs
//! and the `dld` subcommands.
//!
//! Exit codes: 0 success, 1 I/O or internal failure, 2 parse/config/usage
//! error, 3 vocabulary too small, 4 image id mismatch, 5 too few epochs for
//! EL detection, 6 training divergence.

pub mod commands;
pub mod config;
pub mod error;
pub mod formats;
pub mod svg;

pub use commands::{run, Cli, Command};
pub use error::CliError;
