//! Turning corpus segments into model inputs and targets.

use crate::config::Variant;
use crate::encoder::ModelInput;
use crate::model::{Example, StyleInfo};
use crate::ModelError;
use stylox_core::arranger::{PairedCorpus, Split};
use stylox_core::codec::{encode_events, to_piano_roll, tokenize, Segment};
use stylox_core::midi_io::TrackSelector;

/// Input and output track of a translation model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrackPair {
    pub input: TrackSelector,
    pub output: TrackSelector,
}

impl TrackPair {
    pub const ALLOWED: [(TrackSelector, TrackSelector); 4] = [
        (TrackSelector::Bass, TrackSelector::Bass),
        (TrackSelector::Piano, TrackSelector::Piano),
        (TrackSelector::All, TrackSelector::Bass),
        (TrackSelector::All, TrackSelector::Piano),
    ];

    pub fn new(input: TrackSelector, output: TrackSelector) -> Result<TrackPair, ModelError> {
        if !Self::ALLOWED.contains(&(input, output)) {
            return Err(ModelError::Config(format!(
                "track pair {input}->{output} not supported (bass->bass, piano->piano, all->bass, all->piano)"
            )));
        }
        Ok(TrackPair { input, output })
    }
}

/// Whether sequences for this track use the NoteOff(All) compression.
pub fn compress_offs(track: TrackSelector) -> bool {
    track == TrackSelector::Piano
}

pub fn encode_input(seg: &Segment, variant: Variant, track: TrackSelector) -> ModelInput {
    match variant {
        Variant::Roll2Seq => ModelInput::Roll(to_piano_roll(seg)),
        Variant::Seq2Seq => ModelInput::Tokens(tokenize(&encode_events(seg, compress_offs(track)))),
    }
}

pub fn encode_target(seg: &Segment, track: TrackSelector) -> Vec<u32> {
    tokenize(&encode_events(seg, compress_offs(track)))
}

/// Which corpus pairs to use.
#[derive(Debug, Clone, Default)]
pub struct PairFilter {
    /// Restrict to one (source style, target style) pair.
    pub only: Option<(String, String)>,
}

/// Training examples for every corpus pair in `split`. Style ids index
/// `styles`; a target style missing from it is an error unless the model
/// is unconditioned (single style, id 0).
pub fn corpus_examples(
    corpus: &PairedCorpus,
    tracks: TrackPair,
    variant: Variant,
    styles: &[StyleInfo],
    split: Split,
    filter: &PairFilter,
) -> Result<Vec<Example>, ModelError> {
    let mut out = Vec::new();
    for ex in corpus.examples_in(split) {
        if let Some((src, dst)) = &filter.only {
            if &ex.source_style != src || &ex.target_style != dst {
                continue;
            }
        }
        let style = match styles.iter().position(|s| s.name == ex.target_style) {
            Some(i) => i,
            None => {
                return Err(ModelError::UnknownStyle {
                    name: ex.target_style.clone(),
                    available: styles.iter().map(|s| s.name.clone()).collect(),
                })
            }
        };
        let source = corpus.segment(ex.source, tracks.input, ex.segment_index);
        let target = corpus.segment(ex.target, tracks.output, ex.segment_index);
        out.push(Example { input: encode_input(&source, variant, tracks.input), style, target: encode_target(&target, tracks.output) });
    }
    Ok(out)
}
