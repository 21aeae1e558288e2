//! Library side of the `spikewave` command: run configuration, phase
//! commands and JSONL reports. The binary is a thin clap wrapper.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;

pub use commands::{dispatch, Command, Split, Weights};
pub use config::{CacheKind, Precision, RunConfig};
pub use error::{CliError, CliResult};
