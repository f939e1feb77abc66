//! Experiment orchestration, verification suites and plot data for
//! `ddzo-core`.

use std::path::PathBuf;

pub mod config;
pub mod experiment;
pub mod plotdata;
pub mod stats;
pub mod verify;

pub use config::{EnvConfig, ExperimentSpec, MethodVariant};
pub use experiment::{run_experiment, run_single, ExperimentOutcome, RunRecord, SummaryRow};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] ddzo_core::Error),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(String),
    #[error("plotdata: {0}")]
    Plot(String),
}

impl HarnessError {
    /// Configuration and usage problems exit with 2, everything else with 1.
    pub fn exit_code(&self) -> u8 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Core(ddzo_core::Error::InvalidArgument(_)) => 2,
            _ => 1,
        }
    }
}
