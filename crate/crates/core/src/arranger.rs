//! Pattern-based accompaniment arranger and the aligned paired corpus.
//!
//! A style is a set of per-role rhythmic patterns whose events name chord
//! degrees instead of pitches. Rendering tiles the patterns over a chart and
//! resolves each degree against the chord sounding at the event onset.

use crate::chart::{Beats, ChordChart, ChordSymbol};
use crate::codec::{segment_with_length, Segment};
use crate::midi_io::{extract_track, Song, TrackSelector};
use crate::music::{from_twelfths, Note, NoteList, Role, TWELFTHS_PER_BEAT};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use thiserror::Error;

const BAR_TWELFTHS: u32 = 48;

#[derive(Debug, Error)]
pub enum ArrangerError {
    #[error("style '{style}' has no pattern for role {role}")]
    MissingRole { style: String, role: Role },
    #[error("invalid style '{style}': {reason}")]
    InvalidStyle { style: String, reason: String },
    #[error("need at least {needed} styles, got {available}")]
    TooFewStyles { needed: usize, available: usize },
    #[error("unknown style '{0}'")]
    UnknownStyle(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Feel {
    Even,
    Swing,
}

impl fmt::Display for Feel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Feel::Even => "even",
            Feel::Swing => "swing",
        })
    }
}

/// Which chord tone a pattern event plays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Degree {
    Root,
    Third,
    Fifth,
    /// The chord seventh, or the root an octave up for triads.
    Seventh,
    /// The bass pitch class (slash bass or root) one octave above the pattern octave.
    BassOctave,
    /// Every chord tone in root position.
    FullChord,
    /// A semitone below the root of the next bar's first chord.
    Approach,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternEvent {
    /// Onset from pattern start, in 12ths of a beat.
    pub onset: u32,
    /// Duration in 12ths of a beat.
    pub duration: u32,
    pub degree: Degree,
    /// Octave in scientific pitch notation (C4 = MIDI 60).
    pub octave: i8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pattern {
    /// Pattern length in bars (1 or 2).
    pub length: u32,
    pub events: Vec<PatternEvent>,
}

impl Pattern {
    pub fn one_bar(events: &[(u32, u32, Degree, i8)]) -> Self {
        Pattern::new(1, events)
    }

    pub fn new(length: u32, events: &[(u32, u32, Degree, i8)]) -> Self {
        Pattern {
            length,
            events: events
                .iter()
                .map(|&(onset, duration, degree, octave)| PatternEvent { onset, duration, degree, octave })
                .collect(),
        }
    }

    fn validate(&self) -> Result<(), String> {
        if !(1..=2).contains(&self.length) {
            return Err(format!("pattern length {} bars not in 1..=2", self.length));
        }
        let span = self.length * BAR_TWELFTHS;
        for e in &self.events {
            if e.onset >= span {
                return Err(format!("event onset {} outside pattern of {span} twelfths", e.onset));
            }
            if e.duration == 0 {
                return Err("event with zero duration".into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variation {
    pub role: Role,
    pub pattern: Pattern,
    pub probability: f64,
}

/// An arrangement style. For each role the base pattern is played with
/// probability one minus the sum of that role's variation probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleSpec {
    pub name: String,
    #[serde(default)]
    pub family: String,
    pub feel: Feel,
    pub tracks: BTreeMap<Role, Pattern>,
    #[serde(default)]
    pub variations: Vec<Variation>,
}

impl StyleSpec {
    pub fn from_json(text: &str) -> Result<StyleSpec, ArrangerError> {
        let style: StyleSpec = serde_json::from_str(text)?;
        style.validate()?;
        Ok(style)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("style serializes")
    }

    pub fn validate(&self) -> Result<(), ArrangerError> {
        let invalid = |reason: String| ArrangerError::InvalidStyle { style: self.name.clone(), reason };
        for role in [Role::Bass, Role::Piano] {
            if !self.tracks.contains_key(&role) {
                return Err(invalid(format!("missing {role} pattern")));
            }
        }
        for (role, p) in &self.tracks {
            p.validate().map_err(|e| invalid(format!("{role}: {e}")))?;
            let extra: f64 = self.variations.iter().filter(|v| v.role == *role).map(|v| v.probability).sum();
            if !(0.0..=1.0 + 1e-9).contains(&extra) {
                return Err(invalid(format!("{role} variation probabilities sum to {extra}")));
            }
        }
        for v in &self.variations {
            let base = self.tracks.get(&v.role).ok_or_else(|| invalid(format!("variation for absent role {}", v.role)))?;
            v.pattern.validate().map_err(|e| invalid(format!("{} variation: {e}", v.role)))?;
            if v.pattern.length != base.length {
                return Err(invalid(format!("{} variation length differs from base pattern", v.role)));
            }
            if !(0.0..=1.0).contains(&v.probability) {
                return Err(invalid(format!("variation probability {} out of range", v.probability)));
            }
        }
        Ok(())
    }

    pub fn roles(&self) -> impl Iterator<Item = Role> + '_ {
        self.tracks.keys().copied()
    }

    /// Candidate patterns for `role` with their selection probabilities.
    fn choices(&self, role: Role) -> Option<Vec<(&Pattern, f64)>> {
        let base = self.tracks.get(&role)?;
        let vars: Vec<(&Pattern, f64)> =
            self.variations.iter().filter(|v| v.role == role).map(|v| (&v.pattern, v.probability)).collect();
        let rest = 1.0 - vars.iter().map(|(_, p)| p).sum::<f64>();
        let mut out = vec![(base, rest.max(0.0))];
        out.extend(vars);
        Some(out)
    }
}

fn pitch_of(octave: i8, pitch_class: u8, offset: i32) -> Option<u8> {
    let p = 12 * (octave as i32 + 1) + pitch_class as i32 + offset;
    (0..=127).contains(&p).then_some(p as u8)
}

/// Pitches for one pattern event against `chord`; `next_root` is the root of
/// the following bar's first chord.
fn resolve(event: &PatternEvent, chord: &ChordSymbol, next_root: u8) -> Vec<u8> {
    let iv = chord.quality.intervals();
    let root = |offset: i32| pitch_of(event.octave, chord.root, offset);
    let pitches: Vec<Option<u8>> = match event.degree {
        Degree::Root => vec![root(0)],
        Degree::Third => vec![root(iv[1] as i32)],
        Degree::Fifth => vec![root(iv[2] as i32)],
        Degree::Seventh => vec![root(iv.get(3).map_or(12, |&i| i as i32))],
        Degree::BassOctave => vec![pitch_of(event.octave, chord.bass_pitch_class(), 12)],
        Degree::FullChord => iv.iter().map(|&i| root(i as i32)).collect(),
        Degree::Approach => vec![pitch_of(event.octave, next_root, -1)],
    };
    pitches.into_iter().flatten().collect()
}

/// Swing moves the off-beat eighth (6/12 of a beat) to 8/12 of a beat.
fn swing(t: i64) -> i64 {
    if t.rem_euclid(TWELFTHS_PER_BEAT) == 6 {
        t + 2
    } else {
        t
    }
}

fn role_salt(role: Role) -> u64 {
    Role::ALL.iter().position(|r| *r == role).unwrap_or(0) as u64 + 1
}

/// Render one role of `style` over `chart`. Pure in (chart, style, role, seed).
pub fn render(chart: &ChordChart, style: &StyleSpec, role: Role, seed: u64) -> Result<NoteList, ArrangerError> {
    let choices = style
        .choices(role)
        .ok_or_else(|| ArrangerError::MissingRole { style: style.name.clone(), role })?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ role_salt(role));
    let bars = chart.bars.len() as u32;
    let end = bars as i64 * BAR_TWELFTHS as i64;
    let length = choices[0].0.length;
    let twelfth = |t: i64| Beats::new(t, TWELFTHS_PER_BEAT);
    let mut grid: Vec<(u8, i64, i64)> = Vec::new();
    let mut bar = 0u32;
    while bar < bars {
        let pattern = pick(&choices, rng.gen::<f64>());
        let cycle_start = bar as i64 * BAR_TWELFTHS as i64;
        for e in &pattern.events {
            let onset = cycle_start + e.onset as i64;
            if onset >= end {
                continue;
            }
            let offset = (onset + e.duration as i64).min(end);
            let Some(chord) = chart.chord_at(twelfth(onset)) else { continue };
            let this_bar = onset / BAR_TWELFTHS as i64;
            let next_root = chart
                .bars
                .get(this_bar as usize + 1)
                .map_or(chord.root, |b| b[0].chord.root);
            for p in resolve(e, chord, next_root) {
                grid.push((p, onset, offset));
            }
        }
        bar += length;
    }
    if style.feel == Feel::Swing {
        for n in &mut grid {
            n.1 = swing(n.1);
            n.2 = swing(n.2).min(end);
        }
    }
    Ok(NoteList::new(normalize(grid).into_iter().map(|(p, on, off)| Note::new(p, from_twelfths(on), from_twelfths(off))), chart.time_signature))
}

fn pick<'a>(choices: &[(&'a Pattern, f64)], u: f64) -> &'a Pattern {
    let mut acc = 0.0;
    for (p, prob) in choices {
        acc += prob;
        if u < acc {
            return p;
        }
    }
    choices[0].0
}

/// Deduplicate and cut same-pitch overlaps so every note is cleanly encodable.
fn normalize(mut grid: Vec<(u8, i64, i64)>) -> Vec<(u8, i64, i64)> {
    grid.sort();
    let mut out: Vec<(u8, i64, i64)> = Vec::with_capacity(grid.len());
    for n in grid {
        match out.last_mut() {
            Some(prev) if prev.0 == n.0 && prev.1 == n.1 => prev.2 = prev.2.max(n.2),
            Some(prev) if prev.0 == n.0 && n.1 < prev.2 => {
                prev.2 = n.1;
                out.push(n);
            }
            _ => out.push(n),
        }
    }
    out.retain(|n| n.2 > n.1);
    out
}

/// Render every role of a style into a song.
pub fn render_song(chart: &ChordChart, style: &StyleSpec, seed: u64) -> Result<Song, ArrangerError> {
    let mut song = Song::new(chart.time_signature);
    for role in style.roles() {
        song.add_track(role.name(), role, render(chart, style, role, seed)?);
    }
    Ok(song)
}

use Degree::*;

fn bass(events: &[(u32, u32, Degree, i8)]) -> Pattern {
    Pattern::one_bar(events)
}

fn var(role: Role, probability: f64, events: &[(u32, u32, Degree, i8)]) -> Variation {
    Variation { role, pattern: Pattern::one_bar(events), probability }
}

fn style(
    name: &str,
    family: &str,
    feel: Feel,
    tracks: Vec<(Role, Pattern)>,
    variations: Vec<Variation>,
) -> StyleSpec {
    StyleSpec { name: name.into(), family: family.into(), feel, tracks: tracks.into_iter().collect(), variations }
}

fn shells(at: &[(u32, u32)]) -> Pattern {
    let events: Vec<_> = at.iter().flat_map(|&(on, d)| [(on, d, Third, 4), (on, d, Seventh, 4)]).collect();
    Pattern::one_bar(&events)
}

fn chords(at: &[(u32, u32)], octave: i8) -> Pattern {
    let events: Vec<_> = at.iter().map(|&(on, d)| (on, d, FullChord, octave)).collect();
    Pattern::one_bar(&events)
}

/// The built-in style set: four families (jazz, rock, country, latin) whose
/// members share feel and rhythmic vocabulary.
pub fn builtin_styles() -> Vec<StyleSpec> {
    let eighths = |deg: &dyn Fn(u32) -> Degree| -> Pattern {
        bass(&(0..8).map(|i| (i * 6, 6, deg(i), 2)).collect::<Vec<_>>())
    };
    vec![
        style(
            "jazz_swing",
            "jazz",
            Feel::Swing,
            vec![
                (Role::Bass, bass(&[(0, 12, Root, 2), (12, 12, Third, 2), (24, 12, Fifth, 2), (36, 12, Approach, 2)])),
                (Role::Piano, shells(&[(0, 9), (18, 6)])),
            ],
            vec![
                var(Role::Bass, 0.25, &[(0, 12, Root, 2), (12, 12, Fifth, 2), (24, 12, BassOctave, 2), (36, 12, Approach, 2)]),
                var(Role::Piano, 0.25, &[(12, 6, Third, 4), (12, 6, Seventh, 4), (36, 6, Third, 4), (36, 6, Seventh, 4)]),
            ],
        ),
        style(
            "jazz_bop",
            "jazz",
            Feel::Swing,
            vec![
                (Role::Bass, bass(&[(0, 12, Root, 2), (12, 12, Fifth, 2), (24, 12, Third, 2), (36, 12, Approach, 2)])),
                (Role::Piano, shells(&[(6, 6), (30, 12)])),
            ],
            vec![var(Role::Bass, 0.2, &[(0, 12, Root, 2), (12, 12, Third, 2), (24, 12, Fifth, 2), (36, 12, Approach, 2)])],
        ),
        style(
            "jazz_ballad",
            "jazz",
            Feel::Swing,
            vec![
                (Role::Bass, bass(&[(0, 12, Root, 2), (12, 12, Third, 2), (24, 12, Fifth, 2), (36, 12, Seventh, 2)])),
                (Role::Piano, shells(&[(0, 48)])),
                (Role::Strings, chords(&[(0, 48)], 4)),
            ],
            vec![var(Role::Bass, 0.25, &[(0, 12, Root, 2), (12, 12, Fifth, 2), (24, 12, Third, 2), (36, 12, Approach, 2)])],
        ),
        style(
            "rock_straight",
            "rock",
            Feel::Even,
            vec![
                (Role::Bass, eighths(&|_| Root)),
                (Role::Piano, chords(&[(0, 12), (12, 12), (24, 12), (36, 12)], 4)),
                (Role::Guitar, Pattern::one_bar(&[(0, 24, Root, 3), (0, 24, Fifth, 3), (24, 24, Root, 3), (24, 24, Fifth, 3)])),
            ],
            vec![var(Role::Bass, 0.2, &[(0, 6, Root, 2), (6, 6, Root, 2), (12, 6, Root, 2), (18, 6, Root, 2), (24, 6, Root, 2), (30, 6, Root, 2), (36, 6, Fifth, 2), (42, 6, Fifth, 2)])],
        ),
        style(
            "pop_rock",
            "rock",
            Feel::Even,
            vec![
                (Role::Bass, bass(&[(0, 6, Root, 2), (6, 6, Root, 2), (12, 6, Root, 2), (18, 6, Root, 2), (24, 6, Root, 2), (30, 6, Root, 2), (36, 6, Root, 2), (42, 6, Fifth, 2)])),
                (Role::Piano, chords(&[(0, 18), (18, 6), (24, 24)], 4)),
            ],
            vec![var(Role::Piano, 0.25, &[(0, 24, FullChord, 4), (24, 24, FullChord, 4)])],
        ),
        style(
            "hard_rock",
            "rock",
            Feel::Even,
            vec![
                (Role::Bass, eighths(&|i| if i % 4 == 3 { BassOctave } else { Root })),
                (Role::Piano, chords(&[(0, 12), (12, 6), (18, 6), (24, 24)], 3)),
                (Role::Guitar, Pattern::one_bar(&(0..8).flat_map(|i| [(i * 6, 6, Root, 3), (i * 6, 6, Fifth, 3)]).collect::<Vec<_>>())),
            ],
            vec![],
        ),
        style(
            "country_two_beat",
            "country",
            Feel::Even,
            vec![
                (Role::Bass, bass(&[(0, 24, Root, 2), (24, 24, Fifth, 2)])),
                (Role::Piano, chords(&[(12, 12), (36, 12)], 4)),
                (Role::Guitar, Pattern::one_bar(&[(12, 6, FullChord, 3), (36, 6, FullChord, 3)])),
            ],
            vec![var(Role::Bass, 0.25, &[(0, 24, Root, 2), (24, 12, Fifth, 2), (36, 12, Approach, 2)])],
        ),
        style(
            "bluegrass",
            "country",
            Feel::Even,
            vec![
                (Role::Bass, bass(&[(0, 12, Root, 2), (24, 12, Fifth, 2)])),
                (Role::Piano, chords(&[(12, 6), (30, 6), (36, 6)], 4)),
            ],
            vec![var(Role::Bass, 0.3, &[(0, 12, Root, 2), (24, 12, Fifth, 2), (36, 12, Approach, 2)])],
        ),
        style(
            "bossa",
            "latin",
            Feel::Even,
            vec![
                (Role::Bass, bass(&[(0, 18, Root, 2), (18, 6, Fifth, 2), (24, 18, Fifth, 2), (42, 6, Root, 2)])),
                (Role::Piano, chords(&[(0, 12), (18, 12), (36, 12)], 4)),
                (Role::Strings, chords(&[(0, 48)], 4)),
            ],
            vec![var(Role::Piano, 0.25, &[(6, 12, FullChord, 4), (30, 12, FullChord, 4)])],
        ),
        style(
            "samba",
            "latin",
            Feel::Even,
            vec![
                (Role::Bass, bass(&[(0, 12, Root, 2), (12, 6, Root, 2), (18, 6, Fifth, 2), (24, 18, Fifth, 2), (42, 6, Root, 2)])),
                (Role::Piano, chords(&[(6, 6), (18, 12), (36, 6), (42, 6)], 4)),
            ],
            vec![var(Role::Bass, 0.2, &[(0, 18, Root, 2), (18, 6, Fifth, 2), (24, 12, Fifth, 2), (36, 6, Fifth, 2), (42, 6, Approach, 2)])],
        ),
    ]
}

pub fn find_style<'a>(styles: &'a [StyleSpec], name: &str) -> Option<&'a StyleSpec> {
    styles.iter().find(|s| s.name == name)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        })
    }
}

/// One arrangement of one song: a chart rendered in a style.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rendering {
    pub song_id: usize,
    pub style: String,
    pub render_index: u32,
    pub seed: u64,
    pub song: Song,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SongEntry {
    pub id: usize,
    pub name: String,
    pub bars: usize,
    pub split: Split,
}

/// A training pair: the same segment of one song in two styles. Source and
/// target index into `PairedCorpus::renderings`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairExample {
    pub song_id: usize,
    pub segment_index: usize,
    pub source: usize,
    pub target: usize,
    pub source_style: String,
    pub target_style: String,
    pub split: Split,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairDirections {
    /// Every ordered pair of distinct styles.
    Both,
    /// Only pairs whose source style precedes the target style in the style list.
    Forward,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub k_styles_per_song: usize,
    pub renders_per_style: u32,
    pub seed: u64,
    pub validation_songs: usize,
    pub test_songs: usize,
    /// Use exactly these styles (in this order) for every song instead of
    /// sampling `k_styles_per_song`.
    #[serde(default)]
    pub fixed_styles: Option<Vec<String>>,
    #[serde(default = "default_directions")]
    pub directions: PairDirections,
}

fn default_directions() -> PairDirections {
    PairDirections::Both
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            k_styles_per_song: 3,
            renders_per_style: 1,
            seed: 0,
            validation_songs: 0,
            test_songs: 0,
            fixed_styles: None,
            directions: PairDirections::Both,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PairedCorpus {
    pub songs: Vec<SongEntry>,
    pub renderings: Vec<Rendering>,
    pub examples: Vec<PairExample>,
}

/// Stable per-song seed derived from the corpus seed.
fn song_seed(seed: u64, song: usize, salt: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (song as u64).wrapping_mul(0xa076_1d64_78bd_642f) ^ salt);
    rng.gen()
}

/// Render charts in several styles each and pair up aligned segments.
#[allow(clippy::needless_range_loop)] // r indexes two rows of `slots`
pub fn build_corpus(
    charts: &[(String, ChordChart)],
    styles: &[StyleSpec],
    config: &CorpusConfig,
) -> Result<PairedCorpus, ArrangerError> {
    let chosen_fixed: Option<Vec<&StyleSpec>> = match &config.fixed_styles {
        Some(names) => Some(
            names
                .iter()
                .map(|n| find_style(styles, n).ok_or_else(|| ArrangerError::UnknownStyle(n.clone())))
                .collect::<Result<_, _>>()?,
        ),
        None => None,
    };
    let k = chosen_fixed.as_ref().map_or(config.k_styles_per_song, Vec::len);
    if chosen_fixed.is_none() && styles.len() < k {
        return Err(ArrangerError::TooFewStyles { needed: k, available: styles.len() });
    }

    let mut order: Vec<usize> = (0..charts.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed));
    let mut split_of = vec![Split::Train; charts.len()];
    for (rank, &song) in order.iter().enumerate() {
        split_of[song] = if rank < config.test_songs {
            Split::Test
        } else if rank < config.test_songs + config.validation_songs {
            Split::Validation
        } else {
            Split::Train
        };
    }

    let mut corpus = PairedCorpus::default();
    for (song_id, (name, chart)) in charts.iter().enumerate() {
        corpus.songs.push(SongEntry { id: song_id, name: name.clone(), bars: chart.bars.len(), split: split_of[song_id] });
        let picked: Vec<&StyleSpec> = match &chosen_fixed {
            Some(v) => v.clone(),
            None => {
                let mut rng = ChaCha8Rng::seed_from_u64(song_seed(config.seed, song_id, 1));
                let mut idx: Vec<usize> = (0..styles.len()).collect();
                idx.shuffle(&mut rng);
                let mut idx: Vec<usize> = idx.into_iter().take(k).collect();
                idx.sort_unstable();
                idx.into_iter().map(|i| &styles[i]).collect()
            }
        };
        // rendering index per (style position, render)
        let mut slots = vec![vec![0usize; config.renders_per_style as usize]; picked.len()];
        for (si, style) in picked.iter().enumerate() {
            for r in 0..config.renders_per_style {
                let seed = song_seed(config.seed, song_id, 1000 + si as u64 * 97 + r as u64);
                slots[si][r as usize] = corpus.renderings.len();
                corpus.renderings.push(Rendering {
                    song_id,
                    style: style.name.clone(),
                    render_index: r,
                    seed,
                    song: render_song(chart, style, seed)?,
                });
            }
        }
        let length = chart.total_beats() as f64;
        let n_segments = segment_with_length(&NoteList::empty(chart.time_signature), Some(length)).len();
        for segment_index in 0..n_segments {
            for r in 0..config.renders_per_style as usize {
                for a in 0..picked.len() {
                    for b in 0..picked.len() {
                        if a == b || (config.directions == PairDirections::Forward && a > b) {
                            continue;
                        }
                        let (src, dst) = (slots[a][r], slots[b][r]);
                        let silent = [src, dst].iter().any(|&i| {
                            [TrackSelector::Bass, TrackSelector::Piano].iter().any(|&sel| {
                                corpus.segment(i, sel, segment_index).is_empty()
                            })
                        });
                        if silent {
                            log::warn!("song '{name}' segment {segment_index}: empty rendered track, skipped");
                            continue;
                        }
                        corpus.examples.push(PairExample {
                            song_id,
                            segment_index,
                            source: src,
                            target: dst,
                            source_style: picked[a].name.clone(),
                            target_style: picked[b].name.clone(),
                            split: split_of[song_id],
                        });
                    }
                }
            }
        }
    }
    Ok(corpus)
}

impl PairedCorpus {
    pub fn song(&self, id: usize) -> &SongEntry {
        &self.songs[id]
    }

    /// Segment `index` of the selected track of a rendering.
    pub fn segment(&self, rendering: usize, selector: TrackSelector, index: usize) -> Segment {
        let r = &self.renderings[rendering];
        let length = self.songs[r.song_id].bars as f64 * r.song.beats_per_bar() as f64;
        let track = extract_track(&r.song, selector);
        segment_with_length(&track, Some(length)).into_iter().nth(index).unwrap_or_else(Segment::empty)
    }

    /// All segments of the selected track of a rendering.
    pub fn segments(&self, rendering: usize, selector: TrackSelector) -> Vec<Segment> {
        let r = &self.renderings[rendering];
        let length = self.songs[r.song_id].bars as f64 * r.song.beats_per_bar() as f64;
        segment_with_length(&extract_track(&r.song, selector), Some(length))
    }

    pub fn examples_in(&self, split: Split) -> impl Iterator<Item = &PairExample> {
        self.examples.iter().filter(move |e| e.split == split)
    }

    /// Style names in order of first appearance.
    pub fn style_names(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for r in &self.renderings {
            if seen.insert(r.style.clone()) {
                out.push(r.style.clone());
            }
        }
        out
    }

    pub fn segment_count(&self) -> usize {
        self.examples.iter().map(|e| (e.song_id, e.segment_index)).collect::<BTreeSet<_>>().len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::{chord_pitch_classes, parse_chart, random_chart};
    use crate::music::TimeSignature;

    fn root_fifth_style(feel: Feel) -> StyleSpec {
        style(
            "t",
            "t",
            feel,
            vec![
                (Role::Bass, bass(&[(0, 24, Root, 3), (24, 24, Fifth, 3)])),
                (Role::Piano, chords(&[(6, 6)], 4)),
            ],
            vec![],
        )
    }

    #[test]
    fn root_and_fifth_resolve_to_hand_table() {
        let chart = parse_chart("| C |").unwrap();
        let notes = render(&chart, &root_fifth_style(Feel::Even), Role::Bass, 0).unwrap();
        assert_eq!(notes.notes(), &[Note::new(48, 0.0, 2.0), Note::new(55, 2.0, 4.0)]);
    }

    #[test]
    fn swing_delays_offbeat_eighth() {
        let chart = parse_chart("| C |").unwrap();
        let even = render(&chart, &root_fifth_style(Feel::Even), Role::Piano, 0).unwrap();
        let swung = render(&chart, &root_fifth_style(Feel::Swing), Role::Piano, 0).unwrap();
        assert!(even.notes().iter().all(|n| n.onset == 0.5 && n.offset == 1.0));
        assert!(swung.notes().iter().all(|n| n.onset == 8.0 / 12.0 && n.offset == 1.0));
        assert_eq!(swung.len(), 3);
    }

    #[test]
    fn render_is_deterministic_and_seed_sensitive() {
        let chart = random_chart(1, 32, TimeSignature::FourFour);
        for s in builtin_styles() {
            let a = render(&chart, &s, Role::Bass, 7).unwrap();
            assert_eq!(a, render(&chart, &s, Role::Bass, 7).unwrap());
        }
        let jazz = &builtin_styles()[0];
        let differs = (0..10).any(|seed| render(&chart, jazz, Role::Bass, seed).unwrap() != render(&chart, jazz, Role::Bass, 7).unwrap());
        assert!(differs, "variations never fired");
    }

    #[test]
    fn missing_role_is_configuration_error() {
        let chart = parse_chart("| C |").unwrap();
        let err = render(&chart, &root_fifth_style(Feel::Even), Role::Strings, 0).unwrap_err();
        assert!(matches!(err, ArrangerError::MissingRole { .. }));
    }

    #[test]
    fn builtin_styles_are_valid() {
        let styles = builtin_styles();
        assert!(styles.len() >= 8);
        let families: BTreeSet<&str> = styles.iter().map(|s| s.family.as_str()).collect();
        assert!(families.len() >= 3);
        for fam in &families {
            let members: Vec<_> = styles.iter().filter(|s| s.family == *fam).collect();
            assert!(members.len() >= 2);
            assert!(members.iter().all(|s| s.feel == members[0].feel));
        }
        let chart = parse_chart("| C | F |").unwrap();
        for s in &styles {
            s.validate().unwrap();
            assert!(s.tracks.contains_key(&Role::Bass) && s.tracks.contains_key(&Role::Piano));
            let song = render_song(&chart, s, 0).unwrap();
            assert!(song.tracks.iter().all(|t| !t.notes.is_empty()));
            assert_eq!(StyleSpec::from_json(&s.to_json()).unwrap(), *s);
        }
    }

    #[test]
    fn rendered_pitches_are_chord_tones_or_approaches() {
        let styles = builtin_styles();
        for seed in 0..6 {
            let chart = random_chart(seed, 16, TimeSignature::FourFour);
            for s in &styles {
                for role in s.roles() {
                    for n in render(&chart, s, role, seed).unwrap().notes() {
                        let tw = crate::music::to_twelfths(n.onset);
                        assert!((n.onset * 12.0 - tw as f64).abs() < 1e-9, "off grid");
                        assert!((n.offset * 12.0 - (n.offset * 12.0).round()).abs() < 1e-9, "off grid");
                        // chord at the unswung onset
                        let unswung = if s.feel == Feel::Swing && tw % 12 == 8 { tw - 2 } else { tw };
                        let chord = chart.chord_at(Beats::new(unswung, 12)).unwrap();
                        let mut allowed = chord_pitch_classes(chord);
                        let bar = (unswung / 48) as usize;
                        let next = chart.bars.get(bar + 1).map_or(chord.root, |b| b[0].chord.root);
                        allowed.insert((next + 11) % 12);
                        assert!(allowed.contains(&(n.pitch % 12)), "{} {} pitch {}", s.name, role, n.pitch);
                    }
                }
            }
        }
    }

    fn charts(n: usize, bars: usize) -> Vec<(String, ChordChart)> {
        (0..n).map(|i| (format!("song{i}"), random_chart(i as u64, bars, TimeSignature::FourFour))).collect()
    }

    #[test]
    fn six_pairs_per_segment_with_three_styles() {
        let styles = builtin_styles();
        let corpus = build_corpus(&charts(1, 16), &styles, &CorpusConfig::default()).unwrap();
        assert_eq!(corpus.segment_count(), 2);
        assert_eq!(corpus.examples.len(), 12);
        for e in &corpus.examples {
            assert_ne!(e.source_style, e.target_style);
            assert_eq!(corpus.renderings[e.source].song_id, corpus.renderings[e.target].song_id);
        }
    }

    #[test]
    fn two_styles_two_renders() {
        let styles = builtin_styles();
        let cfg = CorpusConfig {
            renders_per_style: 2,
            fixed_styles: Some(vec!["jazz_swing".into(), "pop_rock".into()]),
            ..CorpusConfig::default()
        };
        let corpus = build_corpus(&charts(1, 8), &styles, &cfg).unwrap();
        assert_eq!(corpus.examples.len(), 4);
        let fwd = build_corpus(&charts(1, 8), &styles, &CorpusConfig { directions: PairDirections::Forward, ..cfg }).unwrap();
        assert_eq!(fwd.examples.len(), 2);
        assert!(fwd.examples.iter().all(|e| e.source_style == "jazz_swing"));
    }

    #[test]
    fn single_style_gives_no_pairs_and_too_many_is_error() {
        let styles = builtin_styles();
        let cfg = CorpusConfig { k_styles_per_song: 1, ..CorpusConfig::default() };
        assert!(build_corpus(&charts(2, 8), &styles, &cfg).unwrap().examples.is_empty());
        let cfg = CorpusConfig { k_styles_per_song: 11, ..CorpusConfig::default() };
        assert!(matches!(build_corpus(&charts(2, 8), &styles, &cfg), Err(ArrangerError::TooFewStyles { .. })));
    }

    #[test]
    fn splits_are_disjoint_by_song() {
        let styles = builtin_styles();
        let cfg = CorpusConfig { validation_songs: 3, test_songs: 4, seed: 9, ..CorpusConfig::default() };
        let corpus = build_corpus(&charts(20, 8), &styles, &cfg).unwrap();
        let songs_in = |s: Split| corpus.examples_in(s).map(|e| e.song_id).collect::<BTreeSet<_>>();
        let (tr, va, te) = (songs_in(Split::Train), songs_in(Split::Validation), songs_in(Split::Test));
        assert_eq!((va.len(), te.len()), (3, 4));
        assert!(tr.is_disjoint(&va) && tr.is_disjoint(&te) && va.is_disjoint(&te));
        assert_eq!(corpus, build_corpus(&charts(20, 8), &styles, &cfg).unwrap());
    }
}
