use std::path::Path;
use stylox_core::arranger::ArrangerError;
use stylox_core::midi_io::MidiError;
use stylox_model::ModelError;
use thiserror::Error;

/// Config errors are problems with what the user asked for (exit code 2);
/// runtime errors happen while doing it (exit code 1).
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> CliError {
        CliError::Runtime(format!("{}: {e}", path.display()))
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Config(_) | ModelError::UnknownStyle { .. } => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<ArrangerError> for CliError {
    fn from(e: ArrangerError) -> Self {
        match e {
            ArrangerError::Json(_) => CliError::Runtime(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<MidiError> for CliError {
    fn from(e: MidiError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
