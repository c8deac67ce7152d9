//! File formats, experiment runs and the command line for `sand-core`.

pub mod cli;
pub mod csvio;
pub mod error;
pub mod output;
pub mod parallel;
pub mod run;

pub use error::{CliError, Result};
