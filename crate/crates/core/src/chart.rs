//! Chord charts: a small text format for lead-sheet harmony.
//!
//! ```text
//! 4/4
//! | C | Am7 | Dm7 G7 | C:3 C7:1 |
//! | F/A | Fm | C/G G7 | C |
//! ```
//!
//! The optional first line gives the time signature (4/4 or 12/8). Every other
//! non-blank line is a run of bars, each delimited by `|`. A chord is a root
//! (`A`-`G`, optional `#`/`b`), a quality suffix, an optional `/Bass`, and an
//! optional `:beats` duration (integer, `a/b` or decimal). Chords without a
//! duration share what is left of the bar equally.

use crate::music::TimeSignature;
use num_rational::Ratio;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Exact beat count.
pub type Beats = Ratio<i64>;

const ROOT_NAMES: [&str; 12] = ["C", "Db", "D", "Eb", "E", "F", "F#", "G", "Ab", "A", "Bb", "B"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quality {
    Maj,
    Min,
    #[serde(rename = "7")]
    Dom7,
    Maj7,
    Min7,
    Dim,
    Aug,
    Sus4,
    Min7b5,
}

impl Quality {
    pub const ALL: [Quality; 9] = [
        Quality::Maj,
        Quality::Min,
        Quality::Dom7,
        Quality::Maj7,
        Quality::Min7,
        Quality::Dim,
        Quality::Aug,
        Quality::Sus4,
        Quality::Min7b5,
    ];

    /// Root-position intervals above the root, ascending.
    pub fn intervals(self) -> &'static [u8] {
        match self {
            Quality::Maj => &[0, 4, 7],
            Quality::Min => &[0, 3, 7],
            Quality::Dom7 => &[0, 4, 7, 10],
            Quality::Maj7 => &[0, 4, 7, 11],
            Quality::Min7 => &[0, 3, 7, 10],
            Quality::Dim => &[0, 3, 6],
            Quality::Aug => &[0, 4, 8],
            Quality::Sus4 => &[0, 5, 7],
            Quality::Min7b5 => &[0, 3, 6, 10],
        }
    }

    /// Canonical chart suffix.
    pub fn suffix(self) -> &'static str {
        match self {
            Quality::Maj => "",
            Quality::Min => "m",
            Quality::Dom7 => "7",
            Quality::Maj7 => "maj7",
            Quality::Min7 => "m7",
            Quality::Dim => "dim",
            Quality::Aug => "aug",
            Quality::Sus4 => "sus4",
            Quality::Min7b5 => "m7b5",
        }
    }

    fn from_suffix(s: &str) -> Option<Quality> {
        Some(match s {
            "" | "maj" | "M" => Quality::Maj,
            "m" | "min" | "-" => Quality::Min,
            "7" | "dom7" => Quality::Dom7,
            "maj7" | "M7" | "^7" => Quality::Maj7,
            "m7" | "min7" | "-7" => Quality::Min7,
            "dim" | "o" => Quality::Dim,
            "aug" | "+" => Quality::Aug,
            "sus4" | "sus" => Quality::Sus4,
            "m7b5" | "min7b5" | "-7b5" | "ø" => Quality::Min7b5,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChordSymbol {
    pub root: u8,
    pub quality: Quality,
    pub bass: Option<u8>,
}

impl ChordSymbol {
    pub fn new(root: u8, quality: Quality) -> Self {
        ChordSymbol { root: root % 12, quality, bass: None }
    }

    pub fn with_bass(mut self, bass: u8) -> Self {
        self.bass = Some(bass % 12);
        self
    }

    pub fn transposed(&self, semitones: i32) -> ChordSymbol {
        let t = |pc: u8| (pc as i32 + semitones).rem_euclid(12) as u8;
        ChordSymbol { root: t(self.root), quality: self.quality, bass: self.bass.map(t) }
    }

    /// Lowest sounding pitch class: the slash bass if given, else the root.
    pub fn bass_pitch_class(&self) -> u8 {
        self.bass.unwrap_or(self.root)
    }
}

/// Pitch classes sounding in a chord: the quality's intervals transposed to
/// the root, plus the slash bass when there is one.
pub fn chord_pitch_classes(chord: &ChordSymbol) -> BTreeSet<u8> {
    let mut set: BTreeSet<u8> = chord.quality.intervals().iter().map(|i| (chord.root + i) % 12).collect();
    if let Some(b) = chord.bass {
        set.insert(b);
    }
    set
}

impl fmt::Display for ChordSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", ROOT_NAMES[self.root as usize], self.quality.suffix())?;
        if let Some(b) = self.bass {
            write!(f, "/{}", ROOT_NAMES[b as usize])?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimedChord {
    pub chord: ChordSymbol,
    pub duration: Beats,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChordChart {
    pub time_signature: TimeSignature,
    pub bars: Vec<Vec<TimedChord>>,
}

impl ChordChart {
    pub fn beats_per_bar(&self) -> i64 {
        self.time_signature.beats_per_bar() as i64
    }

    pub fn total_beats(&self) -> i64 {
        self.bars.len() as i64 * self.beats_per_bar()
    }

    /// Chord sounding at `beat`, clamped to the last chord past the end.
    pub fn chord_at(&self, beat: Beats) -> Option<&ChordSymbol> {
        let bpb = Beats::from_integer(self.beats_per_bar());
        let bar = (beat / bpb).floor().to_integer().max(0) as usize;
        let bar_chords = self.bars.get(bar).or_else(|| self.bars.last())?;
        let mut t = beat - bpb * Beats::from_integer(bar as i64);
        for tc in bar_chords {
            if t < tc.duration {
                return Some(&tc.chord);
            }
            t -= tc.duration;
        }
        bar_chords.last().map(|tc| &tc.chord)
    }

    pub fn transposed(&self, semitones: i32) -> ChordChart {
        ChordChart {
            time_signature: self.time_signature,
            bars: self
                .bars
                .iter()
                .map(|bar| bar.iter().map(|tc| TimedChord { chord: tc.chord.transposed(semitones), ..*tc }).collect())
                .collect(),
        }
    }

    /// Render back to chart text. Bars with equal chord durations omit them.
    pub fn to_text(&self) -> String {
        let mut out = format!("{}\n", self.time_signature);
        for line in self.bars.chunks(4) {
            out.push('|');
            for bar in line {
                let even = bar.iter().all(|tc| tc.duration == bar[0].duration);
                for tc in bar {
                    out.push(' ');
                    out.push_str(&tc.chord.to_string());
                    if !even {
                        out.push_str(&format!(":{}", tc.duration));
                    }
                }
                out.push_str(" |");
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChartError {
    #[error("unknown root '{text}' at {line}:{column}")]
    UnknownRoot { text: String, line: usize, column: usize },
    #[error("unknown quality '{text}' at {line}:{column}")]
    UnknownQuality { text: String, line: usize, column: usize },
    #[error("bad duration '{text}' at {line}:{column}")]
    BadDuration { text: String, line: usize, column: usize },
    #[error("bar at {line}:{column} lasts {found} beats, expected {expected}")]
    BarDuration { line: usize, column: usize, found: String, expected: i64 },
    #[error("unsupported time signature '{text}' at line {line}")]
    TimeSignature { text: String, line: usize },
    #[error("syntax error at {line}:{column}: {message}")]
    Syntax { message: String, line: usize, column: usize },
    #[error("chart has no bars")]
    Empty,
}

fn parse_root(s: &str) -> Option<(u8, usize)> {
    let mut chars = s.chars();
    let base = match chars.next()? {
        'C' => 0,
        'D' => 2,
        'E' => 4,
        'F' => 5,
        'G' => 7,
        'A' => 9,
        'B' => 11,
        _ => return None,
    };
    match chars.next() {
        Some('#') => Some(((base + 1) % 12, 2)),
        Some('b') => Some(((base + 11) % 12, 2)),
        _ => Some((base, 1)),
    }
}

fn parse_beats(s: &str) -> Option<Beats> {
    if let Some((n, d)) = s.split_once('/') {
        let n: i64 = n.parse().ok()?;
        let d: i64 = d.parse().ok()?;
        return (d > 0).then(|| Beats::new(n, d));
    }
    if let Some((int, frac)) = s.split_once('.') {
        if frac.is_empty() || frac.len() > 6 || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let int: i64 = if int.is_empty() { 0 } else { int.parse().ok()? };
        let scale = 10i64.pow(frac.len() as u32);
        return Some(Beats::new(int * scale + frac.parse::<i64>().ok()?, scale));
    }
    s.parse::<i64>().ok().map(Beats::from_integer)
}

fn parse_chord(token: &str, line: usize, column: usize) -> Result<(ChordSymbol, Option<Beats>), ChartError> {
    let (body, duration) = match token.split_once(':') {
        Some((body, d)) => {
            let beats = parse_beats(d)
                .filter(|b| *b > Beats::from_integer(0))
                .ok_or_else(|| ChartError::BadDuration {
                    text: d.to_string(),
                    line,
                    column: column + body.chars().count() + 1,
                })?;
            (body, Some(beats))
        }
        None => (token, None),
    };
    let (body, bass) = match body.split_once('/') {
        Some((b, bass_text)) => {
            let bass_col = column + b.chars().count() + 1;
            let bass = match parse_root(bass_text) {
                Some((pc, used)) if used == bass_text.len() => pc,
                _ => {
                    return Err(ChartError::UnknownRoot { text: bass_text.to_string(), line, column: bass_col })
                }
            };
            (b, Some(bass))
        }
        None => (body, None),
    };
    let (root, used) =
        parse_root(body).ok_or_else(|| ChartError::UnknownRoot { text: body.to_string(), line, column })?;
    let suffix = &body[used..];
    let quality = Quality::from_suffix(suffix).ok_or_else(|| ChartError::UnknownQuality {
        text: suffix.to_string(),
        line,
        column: column + used,
    })?;
    Ok((ChordSymbol { root, quality, bass }, duration))
}

/// Parse chart text.
pub fn parse_chart(text: &str) -> Result<ChordChart, ChartError> {
    let mut time_signature = TimeSignature::FourFour;
    let mut bars = Vec::new();
    let mut seen_content = false;
    for (li, raw_line) in text.lines().enumerate() {
        let line_no = li + 1;
        let trimmed = raw_line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if !seen_content && !trimmed.starts_with('|') && trimmed.contains('/') {
            let ts = trimmed
                .split_once('/')
                .and_then(|(n, d)| Some((n.trim().parse::<u32>().ok()?, d.trim().parse::<u32>().ok()?)))
                .and_then(|(n, d)| TimeSignature::from_fraction(n, d))
                .ok_or_else(|| ChartError::TimeSignature { text: trimmed.to_string(), line: line_no })?;
            time_signature = ts;
            seen_content = true;
            continue;
        }
        seen_content = true;
        parse_bar_line(raw_line, line_no, time_signature, &mut bars)?;
    }
    if bars.is_empty() {
        return Err(ChartError::Empty);
    }
    Ok(ChordChart { time_signature, bars })
}

fn parse_bar_line(
    line: &str,
    line_no: usize,
    time_signature: TimeSignature,
    bars: &mut Vec<Vec<TimedChord>>,
) -> Result<(), ChartError> {
    let chars: Vec<(usize, char)> = line.chars().enumerate().map(|(i, c)| (i + 1, c)).collect();
    let first = chars.iter().find(|(_, c)| !c.is_whitespace()).copied();
    let last = chars.iter().rev().find(|(_, c)| !c.is_whitespace()).copied();
    match (first, last) {
        (Some((_, '|')), Some((_, '|'))) => {}
        (Some((col, c)), _) if c != '|' => {
            return Err(ChartError::Syntax { message: "bar line must start with '|'".into(), line: line_no, column: col })
        }
        (_, Some((col, _))) => {
            return Err(ChartError::Syntax { message: "bar line must end with '|'".into(), line: line_no, column: col })
        }
        _ => return Ok(()),
    }
    let bpb = Beats::from_integer(time_signature.beats_per_bar() as i64);
    let bar_starts: Vec<usize> = chars.iter().filter(|(_, c)| *c == '|').map(|(col, _)| *col).collect();
    for pair in bar_starts.windows(2) {
        let (open, close) = (pair[0], pair[1]);
        let mut tokens = Vec::new();
        let mut current: Option<(usize, String)> = None;
        for &(col, c) in &chars[open..close - 1] {
            if c.is_whitespace() {
                if let Some(t) = current.take() {
                    tokens.push(t);
                }
            } else {
                current.get_or_insert_with(|| (col, String::new())).1.push(c);
            }
        }
        tokens.extend(current);
        if tokens.is_empty() {
            return Err(ChartError::Syntax { message: "empty bar".into(), line: line_no, column: open });
        }
        let parsed = tokens
            .iter()
            .map(|(col, t)| parse_chord(t, line_no, *col))
            .collect::<Result<Vec<_>, _>>()?;
        let fixed: Beats = parsed.iter().filter_map(|(_, d)| *d).sum();
        let unspecified = parsed.iter().filter(|(_, d)| d.is_none()).count() as i64;
        let share = if unspecified > 0 { (bpb - fixed) / Beats::from_integer(unspecified) } else { Beats::from_integer(0) };
        let bar: Vec<TimedChord> =
            parsed.into_iter().map(|(chord, d)| TimedChord { chord, duration: d.unwrap_or(share) }).collect();
        let total: Beats = bar.iter().map(|tc| tc.duration).sum();
        if total != bpb || bar.iter().any(|tc| tc.duration <= Beats::from_integer(0)) {
            return Err(ChartError::BarDuration {
                line: line_no,
                column: open,
                found: total.to_string(),
                expected: bpb.to_integer(),
            });
        }
        bars.push(bar);
    }
    Ok(())
}

impl FromStr for ChordChart {
    type Err = ChartError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_chart(s)
    }
}

/// Scale degree (semitones above the tonic) and quality of one chord in a
/// phrase template.
type Degree = (u8, Quality);

const I: Degree = (0, Quality::Maj);
const IMAJ7: Degree = (0, Quality::Maj7);
const I7: Degree = (0, Quality::Dom7);
const II7: Degree = (2, Quality::Min7);
const IIM: Degree = (2, Quality::Min);
const IIIM7: Degree = (4, Quality::Min7);
const IV: Degree = (5, Quality::Maj);
const IV7: Degree = (5, Quality::Dom7);
const IVMAJ7: Degree = (5, Quality::Maj7);
const V: Degree = (7, Quality::Maj);
const V7: Degree = (7, Quality::Dom7);
const VIM: Degree = (9, Quality::Min);
const VIM7: Degree = (9, Quality::Min7);
const VI7: Degree = (9, Quality::Dom7);
const BVII: Degree = (10, Quality::Maj);
const VIIM7B5: Degree = (11, Quality::Min7b5);
const IM: Degree = (0, Quality::Min);
const IVM: Degree = (5, Quality::Min);

/// Four-bar phrases; each bar holds one or two chords.
const PHRASES: &[[&[Degree]; 4]] = &[
    [&[I], &[VIM], &[IIM], &[V7]],
    [&[I], &[IV], &[V7], &[I]],
    [&[II7], &[V7], &[IMAJ7], &[IMAJ7]],
    [&[I7], &[IV7], &[I7], &[I7]],
    [&[IV7], &[IV7], &[I7], &[I7]],
    [&[V7], &[IV7], &[I7], &[V7]],
    [&[I], &[V], &[VIM], &[IV]],
    [&[IMAJ7, VIM7], &[II7, V7], &[IIIM7, VI7], &[II7, V7]],
    [&[IM], &[IVM], &[V7], &[IM]],
    [&[I], &[BVII], &[IV], &[I]],
    [&[IVMAJ7], &[IIIM7], &[II7], &[I]],
    [&[VIIM7B5, I7], &[IV], &[IVM], &[I]],
    [&[I, IV], &[I, V], &[I, IV], &[V, I]],
];

/// Build a random chart from phrase templates in a random key. Deterministic
/// in `seed`. The last bar always returns to the tonic.
pub fn random_chart(seed: u64, bars: usize, time_signature: TimeSignature) -> ChordChart {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let key = rng.gen_range(0..12u8);
    let bpb = Beats::from_integer(time_signature.beats_per_bar() as i64);
    let mut out: Vec<Vec<TimedChord>> = Vec::with_capacity(bars);
    while out.len() < bars {
        let phrase = PHRASES.choose(&mut rng).expect("phrase table is non-empty");
        for bar in phrase.iter().take(bars - out.len()) {
            let share = bpb / Beats::from_integer(bar.len() as i64);
            out.push(
                bar.iter()
                    .map(|&(deg, q)| TimedChord { chord: ChordSymbol::new(key + deg, q), duration: share })
                    .collect(),
            );
        }
    }
    if let Some(last) = out.last_mut() {
        let q = if last[0].chord.quality == Quality::Min { Quality::Min } else { Quality::Maj };
        *last = vec![TimedChord { chord: ChordSymbol::new(key, q), duration: bpb }];
    }
    ChordChart { time_signature, bars: out }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn four() -> Beats {
        Beats::from_integer(4)
    }

    #[test]
    fn four_bars_one_chord_each() {
        let chart = parse_chart("4/4\n| C | F | G7 | C |").unwrap();
        assert_eq!(chart.time_signature, TimeSignature::FourFour);
        assert_eq!(chart.bars.len(), 4);
        for bar in &chart.bars {
            assert_eq!(bar.len(), 1);
            assert_eq!(bar[0].duration, four());
        }
        assert_eq!(chart.bars[2][0].chord, ChordSymbol::new(7, Quality::Dom7));
    }

    #[test]
    fn even_split() {
        let chart = parse_chart("| C F |").unwrap();
        let d: Vec<Beats> = chart.bars[0].iter().map(|t| t.duration).collect();
        assert_eq!(d, vec![Beats::from_integer(2), Beats::from_integer(2)]);
        let chart = parse_chart("| C F G |").unwrap();
        assert!(chart.bars[0].iter().all(|t| t.duration == Beats::new(4, 3)));
    }

    #[test]
    fn explicit_durations_and_remainder() {
        let chart = parse_chart("| C:3 G7 | Dm7:1.5 G7:5/2 |").unwrap();
        assert_eq!(chart.bars[0][1].duration, Beats::from_integer(1));
        assert_eq!(chart.bars[1][0].duration, Beats::new(3, 2));
        let err = parse_chart("| C:3 G7:2 |").unwrap_err();
        assert!(matches!(err, ChartError::BarDuration { line: 1, column: 1, .. }), "{err}");
    }

    #[test]
    fn unknown_quality_has_position() {
        let err = parse_chart("| Cx |").unwrap_err();
        assert_eq!(err.to_string(), "unknown quality 'x' at 1:4");
        let err = parse_chart("4/4\n| C |\n|  F#q |").unwrap_err();
        assert_eq!(err.to_string(), "unknown quality 'q' at 3:6");
    }

    #[test]
    fn rejects_bad_structure() {
        assert!(matches!(parse_chart("C | F |"), Err(ChartError::Syntax { .. })));
        assert!(matches!(parse_chart("| C | F"), Err(ChartError::Syntax { .. })));
        assert!(matches!(parse_chart("| C | |"), Err(ChartError::Syntax { .. })));
        assert!(matches!(parse_chart("3/4\n| C |"), Err(ChartError::TimeSignature { .. })));
        assert!(matches!(parse_chart("| H |"), Err(ChartError::UnknownRoot { .. })));
        assert_eq!(parse_chart("\n\n"), Err(ChartError::Empty));
    }

    #[test]
    fn slash_chords_and_twelve_eight() {
        let chart = parse_chart("12/8\n| C/E Bbmaj7 | F#m7b5 B7 |").unwrap();
        assert_eq!(chart.time_signature, TimeSignature::TwelveEight);
        assert_eq!(chart.bars[0][0].chord, ChordSymbol::new(0, Quality::Maj).with_bass(4));
        assert_eq!(chart.bars[0][1].chord, ChordSymbol::new(10, Quality::Maj7));
        assert_eq!(chart.bars[1][0].chord, ChordSymbol::new(6, Quality::Min7b5));
    }

    #[test]
    fn pitch_class_tables() {
        let set = |v: &[u8]| v.iter().copied().collect::<BTreeSet<u8>>();
        assert_eq!(chord_pitch_classes(&ChordSymbol::new(0, Quality::Maj)), set(&[0, 4, 7]));
        assert_eq!(chord_pitch_classes(&ChordSymbol::new(9, Quality::Min7)), set(&[9, 0, 4, 7]));
        assert_eq!(chord_pitch_classes(&ChordSymbol::new(7, Quality::Dom7)), set(&[7, 11, 2, 5]));
        assert_eq!(
            chord_pitch_classes(&ChordSymbol::new(0, Quality::Maj).with_bass(10)),
            set(&[0, 4, 7, 10])
        );
    }

    #[test]
    fn chord_lookup_by_beat() {
        let chart = parse_chart("| C F | G |").unwrap();
        let at = |b: i64| chart.chord_at(Beats::from_integer(b)).unwrap().root;
        assert_eq!((at(0), at(1), at(2), at(3), at(4), at(7), at(9)), (0, 0, 5, 5, 7, 7, 7));
    }

    #[test]
    fn text_round_trip_and_random_charts() {
        for seed in 0..20 {
            let chart = random_chart(seed, 16, TimeSignature::FourFour);
            assert_eq!(chart.bars.len(), 16);
            assert_eq!(parse_chart(&chart.to_text()).unwrap(), chart);
        }
        assert_eq!(random_chart(3, 8, TimeSignature::FourFour), random_chart(3, 8, TimeSignature::FourFour));
        let chart = parse_chart("| C:3 G7 | Dm7:1.5 G7:5/2 |").unwrap();
        assert_eq!(parse_chart(&chart.to_text()).unwrap(), chart);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn transposition_commutes_with_pitch_classes(root in 0u8..12, q in 0usize..9, bass in proptest::option::of(0u8..12), k in -24i32..24) {
                let mut c = ChordSymbol::new(root, Quality::ALL[q]);
                c.bass = bass;
                let lhs = chord_pitch_classes(&c.transposed(k));
                let rhs: BTreeSet<u8> = chord_pitch_classes(&c).iter().map(|&p| (p as i32 + k).rem_euclid(12) as u8).collect();
                prop_assert_eq!(lhs, rhs);
            }

            #[test]
            fn bars_always_sum_to_four(durs in proptest::collection::vec(proptest::option::of(1i64..4), 1..4)) {
                let mut text = String::from("|");
                for d in &durs {
                    match d { Some(d) => text.push_str(&format!(" C:{d}")), None => text.push_str(" C") }
                }
                text.push_str(" |");
                if let Ok(chart) = parse_chart(&text) {
                    let total: Beats = chart.bars[0].iter().map(|t| t.duration).sum();
                    prop_assert_eq!(total, Beats::from_integer(4));
                }
            }
        }
    }
}
