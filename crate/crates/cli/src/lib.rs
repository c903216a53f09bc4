//! Command-line front end: configuration, the analysis workflow and report
//! writers behind the `symmod` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod report;

pub use config::{AnalysisConfig, SystemConfig, Variation};
pub use error::{CliError, Result};
pub use pipeline::{analyze, group, Analysis, Overrides};
