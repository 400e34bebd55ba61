//! Command-line front end for `cmcal-core`: prediction-file ingestion,
//! repeated calibration/test splits and report emission.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod report;
pub mod split;

pub use config::ExperimentConfig;
pub use dataset::{load_dataset, FileFormat, LogitDataset, ValueKind};
pub use error::{CliError, CliResult};
pub use experiment::{run_experiment, ResultRow};
pub use report::emit_report;
pub use split::{make_splits, SplitAssignment};
