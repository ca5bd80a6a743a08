use serde::{Deserialize, Serialize};
use std::fmt;

/// Number of 12ths-of-a-beat ticks in one beat. All arranger output and all
/// event encodings live on this grid.
pub const TWELFTHS_PER_BEAT: i64 = 12;

/// Convert a beat position to the nearest 12th-of-a-beat grid index.
pub fn to_twelfths(beats: f64) -> i64 {
    (beats * TWELFTHS_PER_BEAT as f64).round() as i64
}

pub fn from_twelfths(twelfths: i64) -> f64 {
    twelfths as f64 / TWELFTHS_PER_BEAT as f64
}

/// A single note: MIDI pitch and an onset/offset pair measured in beats.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Note {
    pub pitch: u8,
    pub onset: f64,
    pub offset: f64,
}

impl Note {
    pub fn new(pitch: u8, onset: f64, offset: f64) -> Self {
        Note { pitch, onset, offset }
    }

    pub fn duration(&self) -> f64 {
        self.offset - self.onset
    }

    pub fn is_valid(&self) -> bool {
        self.pitch <= 127 && self.onset >= 0.0 && self.offset > self.onset && self.offset.is_finite()
    }

    /// Shift the pitch by `semitones`, or `None` when it would leave 0..=127.
    pub fn transposed(&self, semitones: i32) -> Option<Note> {
        let p = self.pitch as i32 + semitones;
        (0..=127).contains(&p).then_some(Note { pitch: p as u8, ..*self })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum TimeSignature {
    #[default]
    #[serde(rename = "4/4")]
    FourFour,
    #[serde(rename = "12/8")]
    TwelveEight,
}

impl TimeSignature {
    /// Beats per bar. 12/8 counts dotted quarters, so both signatures have 4.
    pub fn beats_per_bar(self) -> u32 {
        4
    }

    /// Length of one beat in quarter notes.
    pub fn quarters_per_beat(self) -> f64 {
        match self {
            TimeSignature::FourFour => 1.0,
            TimeSignature::TwelveEight => 1.5,
        }
    }

    pub fn from_fraction(numerator: u32, denominator: u32) -> Option<Self> {
        match (numerator, denominator) {
            (4, 4) => Some(TimeSignature::FourFour),
            (12, 8) => Some(TimeSignature::TwelveEight),
            _ => None,
        }
    }

    pub fn fraction(self) -> (u32, u32) {
        match self {
            TimeSignature::FourFour => (4, 4),
            TimeSignature::TwelveEight => (12, 8),
        }
    }
}

impl fmt::Display for TimeSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (n, d) = self.fraction();
        write!(f, "{n}/{d}")
    }
}

/// Sorted, non-degenerate notes of one track.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NoteList {
    notes: Vec<Note>,
    pub time_signature: TimeSignature,
}

fn note_order(a: &Note, b: &Note) -> std::cmp::Ordering {
    a.onset
        .total_cmp(&b.onset)
        .then(a.pitch.cmp(&b.pitch))
        .then(a.offset.total_cmp(&b.offset))
}

impl NoteList {
    /// Build a list from arbitrary notes; degenerate notes are dropped and the
    /// rest sorted by (onset, pitch).
    pub fn new(notes: impl IntoIterator<Item = Note>, time_signature: TimeSignature) -> Self {
        let mut notes: Vec<Note> = notes.into_iter().filter(Note::is_valid).collect();
        notes.sort_by(note_order);
        NoteList { notes, time_signature }
    }

    pub fn empty(time_signature: TimeSignature) -> Self {
        NoteList { notes: Vec::new(), time_signature }
    }

    pub fn notes(&self) -> &[Note] {
        &self.notes
    }

    pub fn into_notes(self) -> Vec<Note> {
        self.notes
    }

    pub fn len(&self) -> usize {
        self.notes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.notes.is_empty()
    }

    pub fn push(&mut self, note: Note) {
        if note.is_valid() {
            let at = self.notes.partition_point(|n| note_order(n, &note).is_le());
            self.notes.insert(at, note);
        }
    }

    /// Merge several lists into one sorted list.
    pub fn merged<'a>(lists: impl IntoIterator<Item = &'a NoteList>, time_signature: TimeSignature) -> NoteList {
        NoteList::new(lists.into_iter().flat_map(|l| l.notes.iter().copied()), time_signature)
    }

    /// Latest offset, or 0 for an empty list.
    pub fn end(&self) -> f64 {
        self.notes.iter().map(|n| n.offset).fold(0.0, f64::max)
    }

    /// Transpose every note; `None` if any pitch would leave the MIDI range.
    pub fn transposed(&self, semitones: i32) -> Option<NoteList> {
        let notes = self
            .notes
            .iter()
            .map(|n| n.transposed(semitones))
            .collect::<Option<Vec<_>>>()?;
        Some(NoteList::new(notes, self.time_signature))
    }

    pub fn shifted(&self, beats: f64) -> NoteList {
        NoteList::new(
            self.notes.iter().map(|n| Note::new(n.pitch, n.onset + beats, n.offset + beats)),
            self.time_signature,
        )
    }
}

/// Instrument role of a track.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Bass,
    Piano,
    Guitar,
    Strings,
    Drums,
    Other,
}

impl Role {
    pub const ALL: [Role; 6] = [Role::Bass, Role::Piano, Role::Guitar, Role::Strings, Role::Drums, Role::Other];

    /// Role implied by a General MIDI program number (0-based).
    pub fn from_program(program: u8) -> Role {
        match program {
            0..=7 | 16..=23 => Role::Piano,
            24..=31 => Role::Guitar,
            32..=39 => Role::Bass,
            40..=55 => Role::Strings,
            _ => Role::Other,
        }
    }

    /// Representative GM program used when writing a track of this role.
    pub fn default_program(self) -> u8 {
        match self {
            Role::Piano => 0,
            Role::Guitar => 25,
            Role::Bass => 32,
            Role::Strings => 48,
            Role::Drums => 0,
            Role::Other => 80,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Role::Bass => "bass",
            Role::Piano => "piano",
            Role::Guitar => "guitar",
            Role::Strings => "strings",
            Role::Drums => "drums",
            Role::Other => "other",
        }
    }

    pub fn parse(s: &str) -> Option<Role> {
        Role::ALL.into_iter().find(|r| r.name() == s)
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
