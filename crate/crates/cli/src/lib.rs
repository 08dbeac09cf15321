//! Config-driven runner for the `plap-core` library: TOML configs in, CSV
//! tables and a JSON summary out.

pub mod config;
pub mod report;
pub mod run;
pub mod sweep;

pub use config::{parse_config, Command, ConfigError, ConfigErrors, RunConfig};
pub use report::emit_reports;
pub use run::{run, RunArtifact, RunStatus};
