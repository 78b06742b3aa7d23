//! Command-line front end of `jkoflow`.

pub mod args;
pub mod config;
pub mod error;
pub mod output;
pub mod run;

pub use config::{Command, RunConfig};
pub use error::CliError;
pub use output::load_points_csv;
