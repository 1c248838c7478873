//! Experiment runner and file formats for the `permucate` command-line tool.
//!
//! - [`config`]: the `key = value` experiment configuration
//! - [`dataset`]: dataset CSV files
//! - [`results`]: result-row CSV files
//! - [`runner`]: the cell grid, manifest and resume logic
//! - [`summary`]: per-variable aggregates and detection rates
//! - [`plot`]: SVG charts of result files

pub mod config;
pub mod dataset;
pub mod error;
pub mod plot;
pub mod results;
pub mod runner;
pub mod summary;

pub use config::{parse_config, Experiment, ExperimentConfig, Preset};
pub use dataset::{parse_dataset, write_dataset, DatasetFile};
pub use error::{BenchError, Result};
pub use results::{parse_results, write_results, ResultRow};
pub use runner::{run_experiment, RunOptions, RunOutput};
pub use summary::emit_summary;
