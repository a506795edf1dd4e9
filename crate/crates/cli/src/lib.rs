//! Command-line driver: configuration parsing, the four subcommands and
//! all file output.

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{cmd_optimize, cmd_rapid_drive, cmd_sweep, cmd_validate};
pub use config::RunConfig;
