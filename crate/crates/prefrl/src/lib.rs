//! File formats, run configuration, and the `prefrl` command line on top of
//! [`prefrl_core`].

pub mod checkpoint;
pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod formats;
pub mod lock;
pub mod report;
pub mod threads;

pub use error::{CliError, Result};
