//! Certification runs, configs and file formats for Maxwell-Stefan diffusion.
//!
//! A run reads a TOML config ([`config::parse_config`]), executes the selected
//! suites ([`execute::execute`]) and writes one artifact per suite plus a
//! summary and a manifest into a fresh run directory.

pub mod config;
pub mod error;
pub mod execute;
pub mod io;
pub mod parallel;
pub mod studies;
pub mod suites;

pub use config::{parse_config, parse_config_with, Overrides, RunConfig, StudySettings};
pub use error::{ConfigError, RunError};
pub use execute::{execute, ExitStatus, RunSummary};
pub use suites::{CriterionOutcome, Suite};
