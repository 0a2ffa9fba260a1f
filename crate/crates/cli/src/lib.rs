//! Command-line front end: configuration, dataset splitting, the model
//! checkpoint format and the subcommands built on them.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod split;

pub use commands::{exit_code, run, Cli};
