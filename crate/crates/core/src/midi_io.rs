//! Standard MIDI File reading and writing.
//!
//! Times are converted to beats on read (quarter notes for 4/4, dotted
//! quarters for 12/8). Velocity, tempo and controller data are dropped; on
//! write every note gets velocity 100 and the file a fixed 120 BPM tempo.

use crate::music::{Note, NoteList, Role, TimeSignature};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::path::Path;
use thiserror::Error;

/// Ticks per quarter note used when writing.
pub const WRITE_TPQ: u16 = 480;
const WRITE_VELOCITY: u8 = 100;
const TEMPO_US_PER_QUARTER: u32 = 500_000;
const DRUM_CHANNEL: u8 = 9;

#[derive(Debug, Error)]
pub enum MidiError {
    #[error("malformed MIDI at byte {offset}: {message}")]
    Format { offset: usize, message: String },
    #[error("unsupported time signature {numerator}/{denominator}")]
    UnsupportedTimeSignature { numerator: u32, denominator: u32 },
    #[error("unsupported MIDI file: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn format_err(offset: usize, message: impl Into<String>) -> MidiError {
    MidiError::Format { offset, message: message.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub name: String,
    pub role: Role,
    pub notes: NoteList,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Song {
    pub tracks: Vec<Track>,
    pub time_signature: TimeSignature,
}

impl Song {
    pub fn new(time_signature: TimeSignature) -> Self {
        Song { tracks: Vec::new(), time_signature }
    }

    pub fn beats_per_bar(&self) -> u32 {
        self.time_signature.beats_per_bar()
    }

    pub fn add_track(&mut self, name: impl Into<String>, role: Role, notes: NoteList) {
        let mut notes = notes;
        notes.time_signature = self.time_signature;
        self.tracks.push(Track { name: name.into(), role, notes });
    }

    /// Latest note offset over all tracks.
    pub fn end(&self) -> f64 {
        self.tracks.iter().map(|t| t.notes.end()).fold(0.0, f64::max)
    }
}

/// Which tracks to pull out of a song.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackSelector {
    Bass,
    Piano,
    All,
}

impl TrackSelector {
    pub fn name(self) -> &'static str {
        match self {
            TrackSelector::Bass => "bass",
            TrackSelector::Piano => "piano",
            TrackSelector::All => "all",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "bass" => Some(TrackSelector::Bass),
            "piano" => Some(TrackSelector::Piano),
            "all" => Some(TrackSelector::All),
            _ => None,
        }
    }

    fn matches(self, role: Role) -> bool {
        match self {
            TrackSelector::Bass => role == Role::Bass,
            TrackSelector::Piano => role == Role::Piano,
            TrackSelector::All => role != Role::Drums,
        }
    }
}

impl fmt::Display for TrackSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Merge every track matching `selector` into one sorted list. No match gives
/// an empty list.
pub fn extract_track(song: &Song, selector: TrackSelector) -> NoteList {
    NoteList::merged(
        song.tracks.iter().filter(|t| selector.matches(t.role)).map(|t| &t.notes),
        song.time_signature,
    )
}

/// Non-fatal problems found while reading.
#[derive(Debug, Clone, PartialEq)]
pub enum MidiWarning {
    DanglingNoteOn { track: usize, channel: u8, pitch: u8 },
    UnmatchedNoteOff { track: usize, channel: u8, pitch: u8 },
}

impl fmt::Display for MidiWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MidiWarning::DanglingNoteOn { track, channel, pitch } => write!(
                f,
                "track {track} channel {channel}: note-on {pitch} never released, closed at end of track"
            ),
            MidiWarning::UnmatchedNoteOff { track, channel, pitch } => {
                write!(f, "track {track} channel {channel}: note-off {pitch} without note-on")
            }
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn u8(&mut self) -> Result<u8, MidiError> {
        let b = *self
            .bytes
            .get(self.pos)
            .ok_or_else(|| format_err(self.pos, "unexpected end of data"))?;
        self.pos += 1;
        Ok(b)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], MidiError> {
        if self.pos + n > self.bytes.len() {
            return Err(format_err(self.pos, format!("need {n} bytes, only {} left", self.bytes.len() - self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, MidiError> {
        let b = self.take(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, MidiError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn vlq(&mut self) -> Result<u32, MidiError> {
        let start = self.pos;
        let mut value = 0u32;
        for _ in 0..4 {
            let b = self.u8()?;
            value = (value << 7) | (b & 0x7f) as u32;
            if b & 0x80 == 0 {
                return Ok(value);
            }
        }
        Err(format_err(start, "variable-length quantity longer than 4 bytes"))
    }
}

#[derive(Default)]
struct ChannelNotes {
    program: Option<u8>,
    seen: bool,
    open: BTreeMap<u8, VecDeque<u64>>,
    notes: Vec<(u8, u64, u64)>,
}

struct RawTrack {
    name: Option<String>,
    channels: BTreeMap<u8, ChannelNotes>,
}

/// Parse an SMF byte stream. Warnings are logged; use
/// [`read_midi_with_warnings`] to inspect them.
pub fn read_midi(bytes: &[u8]) -> Result<Song, MidiError> {
    let (song, warnings) = read_midi_with_warnings(bytes)?;
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(song)
}

pub fn read_midi_file(path: impl AsRef<Path>) -> Result<Song, MidiError> {
    read_midi(&std::fs::read(path)?)
}

pub fn read_midi_with_warnings(bytes: &[u8]) -> Result<(Song, Vec<MidiWarning>), MidiError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != b"MThd" {
        return Err(format_err(0, "missing MThd header"));
    }
    let header_len = r.u32()? as usize;
    if header_len < 6 {
        return Err(format_err(4, format!("header length {header_len} < 6")));
    }
    let header_start = r.pos;
    let format = r.u16()?;
    let ntracks = r.u16()?;
    let division = r.u16()?;
    r.pos = header_start + header_len;
    if format > 1 {
        return Err(MidiError::Unsupported(format!("SMF format {format}")));
    }
    if division & 0x8000 != 0 || division == 0 {
        return Err(MidiError::Unsupported("SMPTE or zero time division".into()));
    }

    let mut warnings = Vec::new();
    let mut time_signature: Option<(u32, u32)> = None;
    let mut raw_tracks = Vec::new();
    let mut track_index = 0usize;
    while raw_tracks.len() < ntracks as usize {
        if r.pos >= bytes.len() {
            return Err(format_err(r.pos, format!("expected {ntracks} tracks, found {}", raw_tracks.len())));
        }
        let chunk_at = r.pos;
        let id = r.take(4)?;
        let len = r.u32()? as usize;
        if id != b"MTrk" {
            // Unknown chunk types are skipped.
            r.take(len).map_err(|_| format_err(chunk_at, "chunk extends past end of file"))?;
            continue;
        }
        if r.pos + len > bytes.len() {
            return Err(format_err(chunk_at, "track chunk extends past end of file"));
        }
        let end = r.pos + len;
        let raw = parse_track(&mut r, end, track_index, &mut time_signature, &mut warnings)?;
        r.pos = end;
        raw_tracks.push(raw);
        track_index += 1;
    }

    let time_signature = match time_signature {
        None => TimeSignature::FourFour,
        Some((n, d)) => TimeSignature::from_fraction(n, d)
            .ok_or(MidiError::UnsupportedTimeSignature { numerator: n, denominator: d })?,
    };
    let ticks_per_beat = division as f64 * time_signature.quarters_per_beat();

    let mut song = Song::new(time_signature);
    for (ti, raw) in raw_tracks.into_iter().enumerate() {
        let multi = raw.channels.values().filter(|c| c.seen).count() > 1;
        for (ch, cn) in raw.channels {
            if !cn.seen {
                continue;
            }
            let role = if ch == DRUM_CHANNEL {
                Role::Drums
            } else {
                Role::from_program(cn.program.unwrap_or(0))
            };
            let base = raw.name.clone().unwrap_or_else(|| format!("track{ti}"));
            let name = if multi { format!("{base}.ch{ch}") } else { base };
            let notes = cn.notes.iter().map(|&(p, on, off)| {
                Note::new(p, on as f64 / ticks_per_beat, off as f64 / ticks_per_beat)
            });
            song.add_track(name, role, NoteList::new(notes, time_signature));
        }
    }
    Ok((song, warnings))
}

fn parse_track(
    r: &mut Reader<'_>,
    end: usize,
    track_index: usize,
    time_signature: &mut Option<(u32, u32)>,
    warnings: &mut Vec<MidiWarning>,
) -> Result<RawTrack, MidiError> {
    let mut raw = RawTrack { name: None, channels: BTreeMap::new() };
    let mut tick: u64 = 0;
    let mut running: Option<u8> = None;
    let mut ended = false;
    while r.pos < end && !ended {
        tick += r.vlq()? as u64;
        let status_at = r.pos;
        let first = r.u8()?;
        let (status, mut first_data) = if first & 0x80 != 0 {
            (first, None)
        } else {
            let s = running.ok_or_else(|| format_err(status_at, "data byte without running status"))?;
            (s, Some(first))
        };
        match status {
            0xff => {
                running = None;
                let kind = r.u8()?;
                let len = r.vlq()? as usize;
                let data = r.take(len)?;
                match kind {
                    0x03 if raw.name.is_none() => raw.name = Some(String::from_utf8_lossy(data).into_owned()),
                    0x2f => ended = true,
                    0x58 => {
                        if len < 2 {
                            return Err(format_err(status_at, "short time-signature event"));
                        }
                        let ts = (data[0] as u32, 1u32 << data[1].min(31));
                        if TimeSignature::from_fraction(ts.0, ts.1).is_none() {
                            return Err(MidiError::UnsupportedTimeSignature { numerator: ts.0, denominator: ts.1 });
                        }
                        match time_signature {
                            Some(prev) if *prev != ts => {
                                return Err(MidiError::Unsupported("time signature changes".into()))
                            }
                            _ => *time_signature = Some(ts),
                        }
                    }
                    _ => {}
                }
            }
            0xf0 | 0xf7 => {
                running = None;
                let len = r.vlq()? as usize;
                r.take(len)?;
            }
            0xf1..=0xfe => return Err(format_err(status_at, format!("unexpected system message 0x{status:02x}"))),
            _ => {
                running = Some(status);
                let channel = status & 0x0f;
                let kind = status & 0xf0;
                let mut data = |r: &mut Reader<'_>| -> Result<u8, MidiError> {
                    let b = match first_data.take() {
                        Some(b) => b,
                        None => r.u8()?,
                    };
                    if b & 0x80 != 0 {
                        return Err(format_err(r.pos - 1, "status byte where data byte expected"));
                    }
                    Ok(b)
                };
                let cn = raw.channels.entry(channel).or_default();
                match kind {
                    0x80 | 0x90 => {
                        let pitch = data(r)?;
                        let velocity = data(r)?;
                        cn.seen = true;
                        if kind == 0x90 && velocity > 0 {
                            cn.open.entry(pitch).or_default().push_back(tick);
                        } else {
                            match cn.open.get_mut(&pitch).and_then(VecDeque::pop_front) {
                                Some(on) if tick > on => cn.notes.push((pitch, on, tick)),
                                Some(_) => {}
                                None => warnings.push(MidiWarning::UnmatchedNoteOff { track: track_index, channel, pitch }),
                            }
                        }
                    }
                    0xa0 | 0xb0 | 0xe0 => {
                        data(r)?;
                        data(r)?;
                    }
                    0xc0 => {
                        let program = data(r)?;
                        cn.seen = true;
                        if cn.program.is_none() || cn.notes.is_empty() && cn.open.values().all(VecDeque::is_empty) {
                            cn.program = Some(program);
                        }
                    }
                    0xd0 => {
                        data(r)?;
                    }
                    _ => unreachable!(),
                }
            }
        }
    }
    for (&channel, cn) in raw.channels.iter_mut() {
        for (&pitch, ons) in cn.open.iter_mut() {
            for on in ons.drain(..) {
                warnings.push(MidiWarning::DanglingNoteOn { track: track_index, channel, pitch });
                if tick > on {
                    cn.notes.push((pitch, on, tick));
                }
            }
        }
    }
    Ok(raw)
}

fn push_vlq(out: &mut Vec<u8>, mut value: u32) {
    let mut buf = [0u8; 5];
    let mut i = buf.len() - 1;
    buf[i] = (value & 0x7f) as u8;
    value >>= 7;
    while value > 0 {
        i -= 1;
        buf[i] = (value & 0x7f) as u8 | 0x80;
        value >>= 7;
    }
    out.extend_from_slice(&buf[i..]);
}

fn push_chunk(out: &mut Vec<u8>, id: &[u8; 4], body: &[u8]) {
    out.extend_from_slice(id);
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(body);
}

fn channel_for(index: usize, role: Role) -> u8 {
    if role == Role::Drums {
        return DRUM_CHANNEL;
    }
    let c = (index % 15) as u8;
    if c >= DRUM_CHANNEL {
        c + 1
    } else {
        c
    }
}

/// Serialize a song as an SMF type 1 file at 480 ticks per quarter.
pub fn write_midi(song: &Song) -> Vec<u8> {
    let ts = song.time_signature;
    let ticks_per_beat = WRITE_TPQ as f64 * ts.quarters_per_beat();
    let mut out = Vec::new();
    let mut header = Vec::with_capacity(6);
    header.extend_from_slice(&1u16.to_be_bytes());
    header.extend_from_slice(&((song.tracks.len() + 1) as u16).to_be_bytes());
    header.extend_from_slice(&WRITE_TPQ.to_be_bytes());
    push_chunk(&mut out, b"MThd", &header);

    let mut conductor = Vec::new();
    let (num, den) = ts.fraction();
    let clocks_per_click = if ts == TimeSignature::TwelveEight { 36 } else { 24 };
    push_vlq(&mut conductor, 0);
    conductor.extend_from_slice(&[0xff, 0x58, 4, num as u8, den.trailing_zeros() as u8, clocks_per_click, 8]);
    push_vlq(&mut conductor, 0);
    conductor.extend_from_slice(&[0xff, 0x51, 3]);
    conductor.extend_from_slice(&TEMPO_US_PER_QUARTER.to_be_bytes()[1..]);
    push_vlq(&mut conductor, 0);
    conductor.extend_from_slice(&[0xff, 0x2f, 0]);
    push_chunk(&mut out, b"MTrk", &conductor);

    for (i, track) in song.tracks.iter().enumerate() {
        let ch = channel_for(i, track.role);
        let mut body = Vec::new();
        push_vlq(&mut body, 0);
        body.extend_from_slice(&[0xff, 0x03]);
        push_vlq(&mut body, track.name.len() as u32);
        body.extend_from_slice(track.name.as_bytes());
        push_vlq(&mut body, 0);
        body.extend_from_slice(&[0xc0 | ch, track.role.default_program()]);

        // (tick, is_on, pitch); offs sort before ons at equal ticks.
        let mut events: Vec<(u64, bool, u8)> = Vec::with_capacity(track.notes.len() * 2);
        for n in track.notes.notes() {
            let on = (n.onset * ticks_per_beat).round() as u64;
            let off = ((n.offset * ticks_per_beat).round() as u64).max(on + 1);
            events.push((on, true, n.pitch));
            events.push((off, false, n.pitch));
        }
        events.sort();
        let mut last = 0u64;
        for (tick, is_on, pitch) in events {
            push_vlq(&mut body, (tick - last) as u32);
            last = tick;
            if is_on {
                body.extend_from_slice(&[0x90 | ch, pitch, WRITE_VELOCITY]);
            } else {
                body.extend_from_slice(&[0x80 | ch, pitch, 0]);
            }
        }
        push_vlq(&mut body, 0);
        body.extend_from_slice(&[0xff, 0x2f, 0]);
        push_chunk(&mut out, b"MTrk", &body);
    }
    out
}

pub fn write_midi_file(song: &Song, path: impl AsRef<Path>) -> Result<(), MidiError> {
    std::fs::write(path, write_midi(song))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn smf(tpq: u16, tracks: &[Vec<u8>]) -> Vec<u8> {
        let mut out = Vec::new();
        let mut header = Vec::new();
        header.extend_from_slice(&1u16.to_be_bytes());
        header.extend_from_slice(&(tracks.len() as u16).to_be_bytes());
        header.extend_from_slice(&tpq.to_be_bytes());
        push_chunk(&mut out, b"MThd", &header);
        for t in tracks {
            let mut body = t.clone();
            body.extend_from_slice(&[0, 0xff, 0x2f, 0]);
            push_chunk(&mut out, b"MTrk", &body);
        }
        out
    }

    #[test]
    fn single_note_converts_ticks_to_beats() {
        let track = vec![0, 0x90, 60, 100, 0x83, 0x60, 0x80, 60, 0];
        let song = read_midi(&smf(480, &[track])).unwrap();
        assert_eq!(song.tracks.len(), 1);
        assert_eq!(song.tracks[0].role, Role::Piano);
        assert_eq!(song.tracks[0].notes.notes(), &[Note::new(60, 0.0, 1.0)]);
    }

    #[test]
    fn overlapping_same_pitch_is_fifo() {
        // on@0, on@240, off@480, off@720, all pitch 62
        let track = vec![
            0, 0x90, 62, 90, //
            0x81, 0x70, 0x90, 62, 90, //
            0x81, 0x70, 0x80, 62, 0, //
            0x81, 0x70, 0x80, 62, 0,
        ];
        let (song, warnings) = read_midi_with_warnings(&smf(480, &[track])).unwrap();
        assert!(warnings.is_empty());
        let got = song.tracks[0].notes.notes().to_vec();
        // Exhaustive pairing check: of the two possible on/off matchings the
        // FIFO one pairs first-on with first-off.
        let ons = [0.0, 0.5];
        let offs = [1.0, 1.5];
        let fifo: Vec<Note> = ons.iter().zip(offs.iter()).map(|(&a, &b)| Note::new(62, a, b)).collect();
        let lifo = vec![Note::new(62, 0.0, 1.5), Note::new(62, 0.5, 1.0)];
        assert_eq!(got, fifo);
        assert_ne!(got, lifo);
    }

    #[test]
    fn running_status_and_velocity_zero_off() {
        let track = vec![0, 0x90, 60, 100, 0x83, 0x60, 60, 0, 0, 64, 100, 0x83, 0x60, 64, 0];
        let song = read_midi(&smf(480, &[track])).unwrap();
        assert_eq!(song.tracks[0].notes.notes(), &[Note::new(60, 0.0, 1.0), Note::new(64, 1.0, 2.0)]);
    }

    #[test]
    fn three_four_is_rejected() {
        let track = vec![0, 0xff, 0x58, 4, 3, 2, 24, 8];
        let err = read_midi(&smf(480, &[track])).unwrap_err();
        assert!(err.to_string().contains("unsupported time signature"), "{err}");
    }

    #[test]
    fn twelve_eight_uses_dotted_quarter_beats() {
        let track = vec![0, 0xff, 0x58, 4, 12, 3, 36, 8, 0, 0x90, 48, 100, 0x85, 0x50, 0x80, 48, 0];
        let song = read_midi(&smf(480, &[track])).unwrap();
        assert_eq!(song.time_signature, TimeSignature::TwelveEight);
        assert_eq!(song.tracks[0].notes.notes(), &[Note::new(48, 0.0, 1.0)]);
    }

    #[test]
    fn dangling_note_closed_at_end_of_track_with_warning() {
        let track = vec![0, 0x90, 60, 100, 0x87, 0x40, 0xb0, 7, 100];
        let (song, warnings) = read_midi_with_warnings(&smf(480, &[track])).unwrap();
        assert_eq!(warnings.len(), 1);
        assert_eq!(song.tracks[0].notes.notes(), &[Note::new(60, 0.0, 2.0)]);
    }

    #[test]
    fn truncated_file_reports_offset() {
        let mut bytes = smf(480, &[vec![0, 0x90, 60, 100, 0x83, 0x60, 0x80, 60, 0]]);
        bytes.truncate(20);
        match read_midi(&bytes).unwrap_err() {
            MidiError::Format { offset, .. } => assert_eq!(offset, 18),
            e => panic!("unexpected {e}"),
        }
        match read_midi(b"RIFF0000").unwrap_err() {
            MidiError::Format { offset, .. } => assert_eq!(offset, 0),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn drums_channel_and_program_roles() {
        let track = vec![
            0, 0xc1, 33, 0, 0x91, 40, 100, 0x60, 0x81, 40, 0, //
            0, 0x99, 36, 100, 0x60, 0x89, 36, 0,
        ];
        let song = read_midi(&smf(480, &[track])).unwrap();
        let roles: Vec<Role> = song.tracks.iter().map(|t| t.role).collect();
        assert_eq!(roles, vec![Role::Bass, Role::Drums]);
    }

    #[test]
    fn empty_song_writes_header_and_conductor_only() {
        let bytes = write_midi(&Song::new(TimeSignature::FourFour));
        assert_eq!(&bytes[..4], b"MThd");
        assert_eq!(u16::from_be_bytes([bytes[10], bytes[11]]), 1);
        assert!(bytes.ends_with(&[0xff, 0x2f, 0]));
        let song = read_midi(&bytes).unwrap();
        assert!(song.tracks.is_empty());
    }

    #[test]
    fn single_note_writes_on_and_off_at_ticks() {
        let mut song = Song::new(TimeSignature::FourFour);
        song.add_track("bass", Role::Bass, NoteList::new([Note::new(40, 1.0, 1.5)], TimeSignature::FourFour));
        let bytes = write_midi(&song);
        let on_at = bytes.windows(3).position(|w| w == [0x90, 40, 100]).unwrap();
        assert_eq!(&bytes[on_at - 2..on_at], &[0x83, 0x60]);
        let off_at = bytes.windows(3).position(|w| w == [0x80, 40, 0]).unwrap();
        assert_eq!(&bytes[off_at - 2..off_at], &[0x81, 0x70]);
    }

    #[test]
    fn extract_all_skips_drums_and_merges() {
        let ts = TimeSignature::FourFour;
        let mut song = Song::new(ts);
        song.add_track("p1", Role::Piano, NoteList::new([Note::new(60, 1.0, 2.0), Note::new(64, 0.0, 1.0)], ts));
        song.add_track("d", Role::Drums, NoteList::new((0..9).map(|i| Note::new(36, i as f64, i as f64 + 0.5)), ts));
        song.add_track("p2", Role::Piano, NoteList::new([Note::new(67, 0.0, 1.0)], ts));
        let all = extract_track(&song, TrackSelector::All);
        assert_eq!(all.len(), 3);
        let mut oracle: Vec<Note> = song.tracks[0].notes.notes().iter().chain(song.tracks[2].notes.notes()).copied().collect();
        oracle.sort_by(|a, b| a.onset.total_cmp(&b.onset).then(a.pitch.cmp(&b.pitch)));
        assert_eq!(all.notes(), &oracle[..]);
        assert_eq!(extract_track(&song, TrackSelector::Piano).notes(), &oracle[..]);
        assert!(extract_track(&song, TrackSelector::Bass).is_empty());
    }
}
