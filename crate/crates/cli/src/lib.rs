//! Command-line front end: confidence intervals, single DRO solves,
//! coverage studies and divergence checks.

pub mod commands;
pub mod csvio;
pub mod output;

pub use commands::{execute, Cli, CliError};
pub use csvio::{parse_csv, parse_csv_bytes, CsvError};
