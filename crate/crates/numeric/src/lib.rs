//! Minimal dense compute for training small recurrent models on a desk:
//! row-major f32 tensors, a per-step reverse-mode tape, Adam, a seeded RNG
//! and a binary checkpoint container.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod rng;
pub mod tape;
pub mod tensor;

pub use adam::{AdamConfig, ParamStore};
pub use checkpoint::Checkpoint;
pub use rng::Rng;
pub use tape::{Tape, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericError {
    #[error("{op}: incompatible shapes {shapes}")]
    Shape { op: &'static str, shapes: String },
    #[error("{op}: index {index} out of range {bound}")]
    Index { op: &'static str, index: usize, bound: usize },
    #[error("non-finite gradient for parameter '{0}'")]
    NonFinite(String),
    #[error("unknown parameter '{0}'")]
    UnknownParam(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NumericError>;

pub(crate) fn shape_err(op: &'static str, shapes: &[&[usize]]) -> NumericError {
    NumericError::Shape { op, shapes: shapes.iter().map(|s| format!("{s:?}")).collect::<Vec<_>>().join(" vs ") }
}
