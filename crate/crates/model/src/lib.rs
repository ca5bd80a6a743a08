//! Attention encoder-decoder that rewrites an 8-bar accompaniment segment
//! in a target style. Two encoder front ends (piano roll + CNN, or token
//! embedding) feed a bidirectional GRU; a GRU decoder conditioned on a
//! learned style embedding emits event tokens.

pub mod config;
pub mod data;
pub mod encoder;
pub mod layers;
pub mod model;
pub mod train;

pub use config::{ModelConfig, Variant};
pub use encoder::{EncoderRegistry, ModelInput};
pub use model::{DecodeOptions, Example, LossStats, Model, StyleInfo, Translation};
pub use train::{train, CurvePoint, TrainConfig, TrainReport};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("config: {0}")]
    Config(String),
    #[error("input: {0}")]
    Input(String),
    #[error("unknown style '{name}'; available: {}", available.join(", "))]
    UnknownStyle { name: String, available: Vec<String> },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("training diverged at step {step}; parameters restored to the last good evaluation")]
    Diverged { step: u64 },
    #[error(transparent)]
    Numeric(#[from] stylox_numeric::NumericError),
}
