//! Model representations of 8-bar segments: binary piano roll (input) and
//! NoteOn / NoteOff / TimeShift event tokens (output, optionally input).

use crate::music::{from_twelfths, to_twelfths, Note, NoteList, TimeSignature, TWELFTHS_PER_BEAT};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

pub const SEGMENT_BARS: u32 = 8;
pub const BEATS_PER_BAR: u32 = 4;
pub const SEGMENT_BEATS: u32 = SEGMENT_BARS * BEATS_PER_BAR;
pub const SEGMENT_TWELFTHS: i64 = SEGMENT_BEATS as i64 * TWELFTHS_PER_BEAT;
pub const ROLL_PITCHES: usize = 128;
pub const ROLL_COLUMNS_PER_BEAT: usize = 4;
pub const MAX_TIME_SHIFT: u8 = 24;

/// One 8-bar window of a track, re-based to start at beat 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub notes: NoteList,
    pub bars: u32,
    pub beats_per_bar: u32,
}

impl Segment {
    pub fn new(notes: NoteList) -> Self {
        Segment { notes, bars: SEGMENT_BARS, beats_per_bar: BEATS_PER_BAR }
    }

    pub fn empty() -> Self {
        Segment::new(NoteList::empty(TimeSignature::FourFour))
    }

    pub fn beats(&self) -> u32 {
        self.bars * self.beats_per_bar
    }

    pub fn is_empty(&self) -> bool {
        self.notes.is_empty()
    }

    pub fn transposed(&self, semitones: i32) -> Option<Segment> {
        Some(Segment { notes: self.notes.transposed(semitones)?, ..*self })
    }
}

/// Cut a track into consecutive 8-bar segments. The track length is the last
/// offset rounded up to whole bars.
pub fn segment(track: &NoteList) -> Vec<Segment> {
    segment_with_length(track, None)
}

/// Cut a track into 8-bar segments, splitting notes at segment boundaries.
/// A trailing partial window is kept (and implicitly zero-padded) only when it
/// spans at least one bar of the given length.
pub fn segment_with_length(track: &NoteList, length_beats: Option<f64>) -> Vec<Segment> {
    let bpb = BEATS_PER_BAR as f64;
    let seg_beats = SEGMENT_BEATS as f64;
    let length = length_beats.unwrap_or_else(|| (track.end() / bpb - 1e-9).ceil().max(0.0) * bpb);
    let full = (length / seg_beats + 1e-9).floor() as usize;
    let rest = length - full as f64 * seg_beats;
    let count = full + usize::from(rest >= bpb - 1e-9);
    (0..count)
        .map(|w| {
            let start = w as f64 * seg_beats;
            let end = start + seg_beats;
            let notes = track
                .notes()
                .iter()
                .filter(|n| n.onset < end && n.offset > start)
                .map(|n| Note::new(n.pitch, n.onset.max(start) - start, n.offset.min(end) - start));
            Segment::new(NoteList::new(notes, track.time_signature))
        })
        .collect()
}

/// Join segments back into one track, each offset by its position.
pub fn concat_segments(segments: &[Segment], time_signature: TimeSignature) -> NoteList {
    let mut notes = Vec::new();
    let mut start = 0.0;
    for s in segments {
        notes.extend(s.notes.notes().iter().map(|n| Note::new(n.pitch, n.onset + start, n.offset + start)));
        start += s.beats() as f64;
    }
    NoteList::new(notes, time_signature)
}

/// Binary pitch x time grid, 4 columns per beat, stored row-major by pitch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PianoRoll {
    columns: usize,
    cells: Vec<u8>,
}

impl PianoRoll {
    pub fn zeros(columns: usize) -> Self {
        PianoRoll { columns, cells: vec![0; ROLL_PITCHES * columns] }
    }

    pub fn pitches(&self) -> usize {
        ROLL_PITCHES
    }

    pub fn columns(&self) -> usize {
        self.columns
    }

    pub fn get(&self, pitch: usize, column: usize) -> bool {
        self.cells[pitch * self.columns + column] != 0
    }

    pub fn set(&mut self, pitch: usize, column: usize) {
        self.cells[pitch * self.columns + column] = 1;
    }

    pub fn count_ones(&self) -> usize {
        self.cells.iter().filter(|&&c| c != 0).count()
    }

    /// Cells as floats in (column, pitch) order, i.e. one 128-vector per
    /// time step.
    pub fn to_time_major(&self) -> Vec<f32> {
        let mut out = vec![0.0; self.cells.len()];
        for p in 0..ROLL_PITCHES {
            for c in 0..self.columns {
                out[c * ROLL_PITCHES + p] = self.cells[p * self.columns + c] as f32;
            }
        }
        out
    }
}

/// Piano roll of a segment: onsets and offsets rounded to the nearest column,
/// every note covering at least one column.
pub fn to_piano_roll(seg: &Segment) -> PianoRoll {
    let columns = seg.beats() as usize * ROLL_COLUMNS_PER_BEAT;
    let mut roll = PianoRoll::zeros(columns);
    let per_beat = ROLL_COLUMNS_PER_BEAT as f64;
    for n in seg.notes.notes() {
        let start = (n.onset * per_beat).round().max(0.0) as usize;
        if start >= columns {
            continue;
        }
        let end = ((n.offset * per_beat).round() as usize).max(start + 1).min(columns);
        for c in start..end {
            roll.set(n.pitch as usize, c);
        }
    }
    roll
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Token {
    Pad,
    Bos,
    Eos,
    NoteOn(u8),
    NoteOff(u8),
    NoteOffAll,
    TimeShift(u8),
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Pad => f.write_str("PAD"),
            Token::Bos => f.write_str("BOS"),
            Token::Eos => f.write_str("EOS"),
            Token::NoteOn(p) => write!(f, "NoteOn({p})"),
            Token::NoteOff(p) => write!(f, "NoteOff({p})"),
            Token::NoteOffAll => f.write_str("NoteOff(All)"),
            Token::TimeShift(d) => write!(f, "TimeShift({d})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("unknown token id {0}")]
    UnknownId(u32),
    #[error("cannot parse token '{0}'")]
    BadToken(String),
}

impl FromStr for Token {
    type Err = CodecError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || CodecError::BadToken(s.to_string());
        match s {
            "PAD" => return Ok(Token::Pad),
            "BOS" => return Ok(Token::Bos),
            "EOS" => return Ok(Token::Eos),
            "NoteOff(All)" => return Ok(Token::NoteOffAll),
            _ => {}
        }
        let (name, arg) = s.strip_suffix(')').and_then(|s| s.split_once('(')).ok_or_else(bad)?;
        let v: u8 = arg.parse().map_err(|_| bad())?;
        match name {
            "NoteOn" if v <= 127 => Ok(Token::NoteOn(v)),
            "NoteOff" if v <= 127 => Ok(Token::NoteOff(v)),
            "TimeShift" if (1..=MAX_TIME_SHIFT).contains(&v) => Ok(Token::TimeShift(v)),
            _ => Err(bad()),
        }
    }
}

/// Token id layout:
///
/// | ids       | tokens                 |
/// |-----------|------------------------|
/// | 0, 1, 2   | PAD, BOS, EOS          |
/// | 3..=130   | NoteOn(0..=127)        |
/// | 131..=258 | NoteOff(0..=127)       |
/// | 259       | NoteOff(All)           |
/// | 260..=283 | TimeShift(1..=24)      |
pub struct TokenVocab;

impl TokenVocab {
    pub const SIZE: usize = 284;
    pub const PAD: u32 = 0;
    pub const BOS: u32 = 1;
    pub const EOS: u32 = 2;
    const NOTE_ON: u32 = 3;
    const NOTE_OFF: u32 = 131;
    const NOTE_OFF_ALL: u32 = 259;
    const TIME_SHIFT: u32 = 259;

    pub fn id(token: Token) -> u32 {
        match token {
            Token::Pad => Self::PAD,
            Token::Bos => Self::BOS,
            Token::Eos => Self::EOS,
            Token::NoteOn(p) => Self::NOTE_ON + p as u32,
            Token::NoteOff(p) => Self::NOTE_OFF + p as u32,
            Token::NoteOffAll => Self::NOTE_OFF_ALL,
            Token::TimeShift(d) => Self::TIME_SHIFT + d as u32,
        }
    }

    pub fn token(id: u32) -> Result<Token, CodecError> {
        Ok(match id {
            0 => Token::Pad,
            1 => Token::Bos,
            2 => Token::Eos,
            3..=130 => Token::NoteOn((id - Self::NOTE_ON) as u8),
            131..=258 => Token::NoteOff((id - Self::NOTE_OFF) as u8),
            259 => Token::NoteOffAll,
            260..=283 => Token::TimeShift((id - Self::TIME_SHIFT) as u8),
            _ => return Err(CodecError::UnknownId(id)),
        })
    }

    pub fn all_tokens() -> impl Iterator<Item = Token> {
        (0..Self::SIZE as u32).map(|id| Self::token(id).expect("id in range"))
    }

    /// Stable fingerprint of the id layout, stored in checkpoints.
    pub fn hash() -> String {
        let mut h = Sha256::new();
        for t in Self::all_tokens() {
            h.update(t.to_string().as_bytes());
            h.update(b"\n");
        }
        h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// Event tokens of one segment, normally wrapped in BOS ... EOS.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EventSeq {
    pub tokens: Vec<Token>,
}

impl EventSeq {
    pub fn new(tokens: Vec<Token>) -> Self {
        EventSeq { tokens }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Tokens without BOS/EOS/PAD.
    pub fn events(&self) -> impl Iterator<Item = &Token> {
        self.tokens.iter().filter(|t| !matches!(t, Token::Bos | Token::Eos | Token::Pad))
    }

    pub fn parse(text: &str) -> Result<EventSeq, CodecError> {
        text.split_whitespace().map(str::parse).collect::<Result<Vec<_>, _>>().map(EventSeq::new)
    }
}

impl fmt::Display for EventSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.tokens.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{t}")?;
        }
        Ok(())
    }
}

pub fn tokenize(seq: &EventSeq) -> Vec<u32> {
    seq.tokens.iter().map(|&t| TokenVocab::id(t)).collect()
}

pub fn detokenize(ids: &[u32]) -> Result<EventSeq, CodecError> {
    ids.iter().map(|&id| TokenVocab::token(id)).collect::<Result<Vec<_>, _>>().map(EventSeq::new)
}

/// A note on the 12ths grid: (pitch, onset, offset) in twelfths.
type GridNote = (u8, i64, i64);

/// Snap notes to the 12ths grid inside the segment, give each at least one
/// twelfth, and remove same-pitch overlaps (the earlier note is cut at the
/// later onset; notes with identical onsets merge).
fn grid_notes(seg: &Segment) -> Vec<GridNote> {
    let limit = seg.beats() as i64 * TWELFTHS_PER_BEAT;
    let mut notes: Vec<GridNote> = seg
        .notes
        .notes()
        .iter()
        .filter_map(|n| {
            let on = to_twelfths(n.onset).max(0);
            if on >= limit {
                return None;
            }
            let off = to_twelfths(n.offset).max(on + 1).min(limit);
            Some((n.pitch, on, off))
        })
        .collect();
    notes.sort();
    let mut out: Vec<GridNote> = Vec::with_capacity(notes.len());
    for n in notes {
        match out.last_mut() {
            Some(prev) if prev.0 == n.0 && prev.1 == n.1 => prev.2 = prev.2.max(n.2),
            Some(prev) if prev.0 == n.0 && n.1 < prev.2 => {
                prev.2 = n.1;
                out.push(n);
            }
            _ => out.push(n),
        }
    }
    out
}

/// The segment as `encode_events` sees it: notes on the 12ths grid with
/// same-pitch overlaps resolved. Decoding an encoding yields exactly this.
pub fn quantize(seg: &Segment) -> Segment {
    let notes = grid_notes(seg)
        .into_iter()
        .map(|(p, on, off)| Note::new(p, from_twelfths(on), from_twelfths(off)));
    Segment { notes: NoteList::new(notes, seg.notes.time_signature), ..*seg }
}

fn push_time_shift(tokens: &mut Vec<Token>, mut delta: i64) {
    while delta > 0 {
        let step = delta.min(MAX_TIME_SHIFT as i64);
        tokens.push(Token::TimeShift(step as u8));
        delta -= step;
    }
}

/// Encode a segment as BOS, events, EOS. With `compress_offs`, an instant at
/// which two or more notes end and nothing else keeps sounding emits a single
/// `NoteOff(All)`.
pub fn encode_events(seg: &Segment, compress_offs: bool) -> EventSeq {
    let notes = grid_notes(seg);
    // time -> (offs, ons); BTreeMap keeps both time and pitch order.
    let mut instants: BTreeMap<i64, (Vec<u8>, Vec<u8>)> = BTreeMap::new();
    for &(p, on, off) in &notes {
        instants.entry(on).or_default().1.push(p);
        instants.entry(off).or_default().0.push(p);
    }
    let mut tokens = vec![Token::Bos];
    let mut clock = 0i64;
    let mut sounding = 0usize;
    for (time, (mut offs, mut ons)) in instants {
        push_time_shift(&mut tokens, time - clock);
        clock = time;
        offs.sort_unstable();
        ons.sort_unstable();
        if compress_offs && offs.len() >= 2 && offs.len() == sounding {
            tokens.push(Token::NoteOffAll);
        } else {
            tokens.extend(offs.iter().map(|&p| Token::NoteOff(p)));
        }
        tokens.extend(ons.iter().map(|&p| Token::NoteOn(p)));
        sounding = sounding + ons.len() - offs.len();
    }
    tokens.push(Token::Eos);
    EventSeq::new(tokens)
}

/// Irregularities met while decoding a (possibly model-generated) sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Anomalies {
    /// NoteOff / NoteOff(All) with nothing open at that pitch.
    pub unmatched_off: u32,
    /// NoteOn for a pitch that is already sounding.
    pub repeated_on: u32,
    /// Time advanced past the end of the segment.
    pub time_overflow: u32,
    /// Notes still open at EOS.
    pub unclosed: u32,
    /// Notes closed at the instant they started.
    pub empty_note: u32,
    /// BOS inside the sequence.
    pub misplaced: u32,
}

impl Anomalies {
    pub fn total(&self) -> u32 {
        self.unmatched_off + self.repeated_on + self.time_overflow + self.unclosed + self.empty_note + self.misplaced
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub segment: Segment,
    pub anomalies: Anomalies,
}

/// Decode event tokens into an 8-bar segment. Never fails: irregularities are
/// counted, and notes left open are held to the end of the segment.
pub fn decode_events(seq: &EventSeq) -> Decoded {
    let limit = SEGMENT_TWELFTHS;
    let mut anomalies = Anomalies::default();
    let mut open: BTreeMap<u8, VecDeque<i64>> = BTreeMap::new();
    let mut notes: Vec<Note> = Vec::new();
    let mut clock = 0i64;
    let mut close = |pitch: u8, on: i64, at: i64, anomalies: &mut Anomalies| {
        let off = at.min(limit);
        if off > on {
            notes.push(Note::new(pitch, from_twelfths(on), from_twelfths(off)));
        } else {
            anomalies.empty_note += 1;
        }
    };
    let mut tokens = seq.tokens.iter().peekable();
    if tokens.peek() == Some(&&Token::Bos) {
        tokens.next();
    }
    for &t in tokens {
        match t {
            Token::Eos => break,
            Token::Pad => {}
            Token::Bos => anomalies.misplaced += 1,
            Token::TimeShift(d) => {
                let before = clock;
                clock += d as i64;
                if clock > limit && before <= limit {
                    anomalies.time_overflow += 1;
                }
            }
            Token::NoteOn(p) => {
                if clock >= limit {
                    continue;
                }
                let q = open.entry(p).or_default();
                if !q.is_empty() {
                    anomalies.repeated_on += 1;
                }
                q.push_back(clock);
            }
            Token::NoteOff(p) => match open.get_mut(&p).and_then(VecDeque::pop_front) {
                Some(on) => close(p, on, clock, &mut anomalies),
                None => anomalies.unmatched_off += 1,
            },
            Token::NoteOffAll => {
                let mut any = false;
                for (&p, q) in open.iter_mut() {
                    for on in q.drain(..) {
                        any = true;
                        close(p, on, clock, &mut anomalies);
                    }
                }
                if !any {
                    anomalies.unmatched_off += 1;
                }
            }
        }
    }
    for (&p, q) in open.iter_mut() {
        for on in q.drain(..) {
            anomalies.unclosed += 1;
            close(p, on, limit, &mut anomalies);
        }
    }
    Decoded { segment: Segment::new(NoteList::new(notes, TimeSignature::FourFour)), anomalies }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(notes: &[(u8, f64, f64)]) -> Segment {
        Segment::new(NoteList::new(notes.iter().map(|&(p, a, b)| Note::new(p, a, b)), TimeSignature::FourFour))
    }

    #[test]
    fn boundary_note_is_split() {
        let track = NoteList::new([Note::new(60, 31.0, 33.0)], TimeSignature::FourFour);
        let segs = segment(&track);
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[0].notes.notes(), &[Note::new(60, 31.0, 32.0)]);
        assert_eq!(segs[1].notes.notes(), &[Note::new(60, 0.0, 1.0)]);
    }

    #[test]
    fn segment_counts() {
        let track = NoteList::new((0..64).map(|b| Note::new(40, b as f64, b as f64 + 0.5)), TimeSignature::FourFour);
        assert_eq!(segment(&track).len(), 2);
        assert!(segment(&NoteList::empty(TimeSignature::FourFour)).is_empty());
        // 66 beats: the 2-beat tail is less than a bar and is dropped.
        assert_eq!(segment_with_length(&track, Some(66.0)).len(), 2);
        assert_eq!(segment_with_length(&track, Some(68.0)).len(), 3);
        assert_eq!(segment_with_length(&NoteList::empty(TimeSignature::FourFour), Some(64.0)).len(), 2);
    }

    #[test]
    fn piano_roll_cells() {
        let roll = to_piano_roll(&seg(&[(60, 0.0, 1.0)]));
        assert_eq!((roll.pitches(), roll.columns()), (128, 128));
        assert!((0..4).all(|c| roll.get(60, c)) && !roll.get(60, 4));
        assert_eq!(roll.count_ones(), 4);
        let roll = to_piano_roll(&seg(&[(60, 0.0, 0.1)]));
        assert!(roll.get(60, 0));
        assert_eq!(roll.count_ones(), 1);
        assert_eq!(to_piano_roll(&Segment::empty()).count_ones(), 0);
    }

    pub(crate) fn figure_two_bar() -> Segment {
        let t = |x: i64| x as f64 / 12.0;
        let mut notes = vec![(50, t(0), t(24))];
        for p in [60, 65, 69, 76] {
            notes.push((p, t(9), t(21)));
        }
        for p in [43, 59, 65, 69, 76] {
            notes.push((p, t(24), t(48)));
        }
        seg(&notes)
    }

    const FIGURE_TWO: &str = "NoteOn(50) TimeShift(9) NoteOn(60) NoteOn(65) NoteOn(69) NoteOn(76) \
        TimeShift(12) NoteOff(60) NoteOff(65) NoteOff(69) NoteOff(76) TimeShift(3) NoteOff(50) \
        NoteOn(43) NoteOn(59) NoteOn(65) NoteOn(69) NoteOn(76) TimeShift(24) NoteOff(All)";

    #[test]
    fn figure_two_sequence() {
        let seq = encode_events(&figure_two_bar(), true);
        let body: Vec<Token> = seq.events().copied().collect();
        assert_eq!(body.len(), 20);
        assert_eq!(EventSeq::new(body).to_string(), FIGURE_TWO);
        assert_eq!(seq.tokens.first(), Some(&Token::Bos));
        assert_eq!(seq.tokens.last(), Some(&Token::Eos));
        let decoded = decode_events(&seq);
        assert_eq!(decoded.anomalies.total(), 0);
        assert_eq!(decoded.segment, figure_two_bar());
    }

    #[test]
    fn long_gap_is_split_greedily() {
        let s = seg(&[(40, 0.0, 1.0), (40, 3.5, 4.0)]);
        let seq = encode_events(&s, false);
        assert_eq!(
            seq.to_string(),
            "BOS NoteOn(40) TimeShift(12) NoteOff(40) TimeShift(24) TimeShift(6) NoteOn(40) TimeShift(6) NoteOff(40) EOS"
        );
        assert_eq!(encode_events(&Segment::empty(), true).tokens, vec![Token::Bos, Token::Eos]);
    }

    #[test]
    fn retrigger_puts_off_before_on() {
        let s = seg(&[(40, 0.0, 1.0), (40, 1.0, 2.0)]);
        let seq = encode_events(&s, false);
        assert_eq!(seq.to_string(), "BOS NoteOn(40) TimeShift(12) NoteOff(40) NoteOn(40) TimeShift(12) NoteOff(40) EOS");
        assert_eq!(decode_events(&seq).segment, s);
    }

    #[test]
    fn single_off_is_not_compressed() {
        let s = seg(&[(40, 0.0, 1.0)]);
        assert_eq!(encode_events(&s, true).to_string(), "BOS NoteOn(40) TimeShift(12) NoteOff(40) EOS");
    }

    #[test]
    fn decode_degenerate_sequences() {
        let d = decode_events(&EventSeq::parse("BOS NoteOff(60) EOS").unwrap());
        assert!(d.segment.is_empty());
        assert_eq!(d.anomalies.total(), 1);
        let d = decode_events(&EventSeq::parse("BOS NoteOn(60) EOS").unwrap());
        assert_eq!(d.segment.notes.notes(), &[Note::new(60, 0.0, 32.0)]);
        assert_eq!(d.anomalies.total(), 1);
        let mut tokens = vec![Token::Bos, Token::NoteOn(50)];
        tokens.extend(std::iter::repeat_n(Token::TimeShift(24), 20));
        tokens.push(Token::NoteOn(52));
        tokens.push(Token::NoteOffAll);
        let d = decode_events(&EventSeq::new(tokens));
        assert_eq!(d.segment.notes.notes(), &[Note::new(50, 0.0, 32.0)]);
        assert_eq!(d.anomalies.time_overflow, 1);
        assert!(d.segment.notes.notes().iter().all(|n| n.offset <= 32.0));
    }

    #[test]
    fn vocab_layout() {
        assert_eq!(TokenVocab::all_tokens().count(), TokenVocab::SIZE);
        let mut seen = std::collections::HashSet::new();
        for id in 0..TokenVocab::SIZE as u32 {
            let t = TokenVocab::token(id).unwrap();
            assert!(seen.insert(t));
            assert_eq!(TokenVocab::id(t), id);
        }
        assert_eq!(128 + 128 + 24 + 1 + 3, TokenVocab::SIZE);
        assert_eq!((TokenVocab::PAD, TokenVocab::BOS, TokenVocab::EOS), (0, 1, 2));
        assert_eq!(TokenVocab::id(Token::TimeShift(24)), 283);
        assert!(detokenize(&[284]).is_err());
        assert_eq!(TokenVocab::hash(), TokenVocab::hash());
    }

    #[test]
    fn off_grid_input_is_quantized() {
        let s = seg(&[(60, 0.01, 0.49), (60, 0.3, 1.0), (62, 2.0, 2.001)]);
        let seq = encode_events(&s, false);
        let d = decode_events(&seq);
        assert_eq!(d.anomalies.total(), 0);
        assert_eq!(d.segment, quantize(&s));
    }
}
