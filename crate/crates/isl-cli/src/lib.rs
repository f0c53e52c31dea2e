//! Experiment orchestration for the inverse-scattering laboratory: JSON configs,
//! reproducible records, parameter sweeps and summary reports.

pub mod config;
pub mod experiments;
pub mod record;
pub mod runner;

pub use config::{ExperimentConfig, ExperimentId};
pub use record::{ExperimentRecord, Metric, Status};
pub use runner::{report, run, sweep, Report, SweepSummary};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("unknown axis `{0}`: expected a numeric config field such as v or alpha")]
    UnknownAxis(String),
    #[error("no record.json found under {0}")]
    NoRecords(String),
    #[error("io: {0}")]
    Io(String),
    #[error("worker pool: {0}")]
    Pool(String),
}
