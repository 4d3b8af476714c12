//! File formats and the `groupcf` command line for the counterfactual search
//! core in [`groupcf_core`].
//!
//! * [`data`]: schema JSON and CSV datasets.
//! * [`files`]: versioned model, output and item-set JSON.
//! * [`cli`]: argument parsing and the commands.

pub mod cli;
pub mod data;
mod error;
pub mod files;

pub use error::{CliError, Result};
