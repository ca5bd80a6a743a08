//! Command-line orchestration: corpus generation, training, translation,
//! evaluation and style-profile analysis, driven by a JSON experiment config.

pub mod commands;
pub mod config;
pub mod corpus_io;
pub mod error;
pub mod eval;
pub mod experiments;

pub use config::ExperimentConfig;
pub use error::{CliError, Result};
pub use eval::{EvaluationReport, ReportRow};
