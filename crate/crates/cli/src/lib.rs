//! Command-line front end for `odmr-core`: configuration, subcommands,
//! CSV/JSON export and SVG plots.

pub mod cli;
pub mod commands;
pub mod config;
pub mod csv;
pub mod error;
pub mod report;
pub mod svg;

pub use cli::{Cli, Command, GlobalArgs};
pub use config::RunConfig;
pub use error::CliError;
