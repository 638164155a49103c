//! Scenario parsing, experiment orchestration, and result emission for the
//! `pig` command-line tool.

pub mod error;
pub mod expr_json;
pub mod registry;
pub mod runner;
pub mod scenario;
pub mod svg;

pub use error::{CliError, CliResult};
