//! Symbolic music building blocks for accompaniment style translation.
//!
//! The crate covers everything that does not involve learning: reading and
//! writing Standard MIDI Files, parsing chord charts, rendering charts into
//! accompaniment tracks with a pattern arranger, the piano-roll and event
//! encodings used as model input/output, and the objective evaluation metrics.

pub mod arranger;
pub mod chart;
pub mod codec;
pub mod metrics;
pub mod midi_io;
pub mod music;

pub use music::{Note, NoteList, Role, TimeSignature};
