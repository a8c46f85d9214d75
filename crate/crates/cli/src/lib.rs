//! Command-line front end: config parsing, experiment dispatch, CSV output
//! and the verification suite.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod verify;

pub use error::CliError;
