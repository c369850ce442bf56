//! Scenario parsing, artifact output and subcommand dispatch for the
//! `hypflow` binary.

use std::path::PathBuf;

pub mod dispatch;
pub mod output;
pub mod scenario;

pub use dispatch::run;
pub use scenario::{parse_scenario, parse_scenario_str, Scenario, ScenarioFile};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] hypflow::Error),
    #[error("{0}")]
    Run(String),
}

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const ERROR: i32 = 1;
    pub const FAIL: i32 = 2;
    pub const USAGE: i32 = 64;
}
