//! IO, file formats, and experiment orchestration around `auxcal-core`:
//! checkpoint and dataset files, plain-text experiment configs, the
//! ablation/grid-search runner, and CSV/JSON report emission.

pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod error;
pub mod report;
pub mod runner;

pub use config::ExperimentConfig;
pub use error::CliError;
pub use runner::AggregateReport;
