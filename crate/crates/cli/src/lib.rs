//! Command-line pipeline and HTTP editing service for light estimates.

pub mod bundle;
pub mod commands;
pub mod error;
pub mod service;

pub use bundle::Bundle;
pub use error::{CliError, CliResult};
