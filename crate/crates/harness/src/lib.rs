//! Seeded Monte Carlo experiments over `rucoord-core`: configuration,
//! replication, theorem-level probes and report files.

pub mod config;
pub mod experiment;
pub mod output;
pub mod probes;
pub mod runner;

pub use config::{ExperimentConfig, GameSource, LatticeAnalysis, NetworkSource, Probe};
pub use experiment::{replicate, run_experiment, run_experiment_with, ExperimentReport, ReplicationResult};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
    #[error("probe: {0}")]
    Probe(String),
    #[error(transparent)]
    Core(#[from] rucoord_core::Error),
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Io(e.to_string())
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
