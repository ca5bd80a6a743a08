//! A paired corpus on disk: `manifest.jsonl` (one header line, then song,
//! rendering and pair lines), one MIDI file per rendering under `midi/`,
//! the chart text of every song under `charts/`, and the full style
//! definitions in `styles.json`.
//!
//! Rendering lines carry the SHA-256 of their MIDI file, so the manifest
//! hash covers the whole corpus.

use crate::error::{CliError, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use stylox_core::arranger::{CorpusConfig, PairExample, PairedCorpus, Rendering, SongEntry, Split, StyleSpec};
use stylox_core::chart::{parse_chart, ChordChart};
use stylox_core::midi_io::{read_midi, write_midi};

pub const MANIFEST: &str = "manifest.jsonl";
pub const STYLES_FILE: &str = "styles.json";
const FORMAT: &str = "stylox-corpus/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Line {
    Header { format: String, config: CorpusConfig, styles: Vec<String>, excluded: Vec<String> },
    Song(SongEntry),
    Rendering { index: usize, song_id: usize, style: String, render_index: u32, seed: u64, midi: String, sha256: String },
    Pair(PairExample),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSummary {
    pub songs: usize,
    pub segments: usize,
    pub pairs: usize,
    pub manifest_sha256: String,
}

impl CorpusSummary {
    pub fn split_pairs(corpus: &PairedCorpus) -> [(Split, usize); 3] {
        [Split::Train, Split::Validation, Split::Test].map(|s| (s, corpus.examples_in(s).count()))
    }
}

#[derive(Debug, Clone)]
pub struct LoadedCorpus {
    pub corpus: PairedCorpus,
    /// Every style offered to the generator, in order.
    pub styles: Vec<StyleSpec>,
    pub config: CorpusConfig,
    pub manifest_sha256: String,
}

/// A chart file that could not be used.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartFailure {
    pub file: PathBuf,
    pub message: String,
}

impl std::fmt::Display for ChartFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.file.display(), self.message)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest.iter() {
        let _ = write!(s, "{b:02x}");
    }
    s
}

/// Named charts that parsed, and the files that did not.
pub type LoadedCharts = (Vec<(String, ChordChart)>, Vec<ChartFailure>);

/// Parses every `*.txt` / `*.chart` file in `dir`, sorted by file name.
/// Unparseable charts are returned separately instead of failing the run.
pub fn read_charts(dir: &Path) -> Result<LoadedCharts> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && matches!(p.extension().and_then(|e| e.to_str()), Some("txt" | "chart")))
        .collect();
    files.sort();
    let mut charts = Vec::new();
    let mut failures = Vec::new();
    for file in files {
        let text = std::fs::read_to_string(&file).map_err(|e| CliError::io(&file, e))?;
        match parse_chart(&text) {
            Ok(chart) => {
                let name = file.file_stem().and_then(|s| s.to_str()).unwrap_or("chart").to_string();
                charts.push((name, chart));
            }
            Err(e) => failures.push(ChartFailure { file, message: e.to_string() }),
        }
    }
    Ok((charts, failures))
}

fn midi_name(r: &Rendering, index: usize) -> String {
    format!("midi/{index:05}_s{:04}_{}_{}.mid", r.song_id, r.style, r.render_index)
}

fn to_line<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string(value).expect("manifest lines serialize");
    s.push('\n');
    s
}

/// Writes the corpus under `dir` (created if needed) and returns its summary.
pub fn write_corpus(
    dir: &Path,
    corpus: &PairedCorpus,
    charts: &[(String, ChordChart)],
    styles: &[StyleSpec],
    config: &CorpusConfig,
    failures: &[ChartFailure],
) -> Result<CorpusSummary> {
    for sub in ["midi", "charts"] {
        std::fs::create_dir_all(dir.join(sub)).map_err(|e| CliError::io(&dir.join(sub), e))?;
    }
    let mut manifest = to_line(&Line::Header {
        format: FORMAT.into(),
        config: config.clone(),
        styles: styles.iter().map(|s| s.name.clone()).collect(),
        excluded: failures.iter().map(|f| f.to_string()).collect(),
    });
    for (song, (_, chart)) in corpus.songs.iter().zip(charts) {
        manifest.push_str(&to_line(&Line::Song(song.clone())));
        let path = dir.join(format!("charts/s{:04}.txt", song.id));
        std::fs::write(&path, chart.to_text()).map_err(|e| CliError::io(&path, e))?;
    }
    for (index, r) in corpus.renderings.iter().enumerate() {
        let name = midi_name(r, index);
        let bytes = write_midi(&r.song);
        let path = dir.join(&name);
        std::fs::write(&path, &bytes).map_err(|e| CliError::io(&path, e))?;
        manifest.push_str(&to_line(&Line::Rendering {
            index,
            song_id: r.song_id,
            style: r.style.clone(),
            render_index: r.render_index,
            seed: r.seed,
            midi: name,
            sha256: sha256_hex(&bytes),
        }));
    }
    for ex in &corpus.examples {
        manifest.push_str(&to_line(&Line::Pair(ex.clone())));
    }
    let path = dir.join(MANIFEST);
    std::fs::write(&path, &manifest).map_err(|e| CliError::io(&path, e))?;
    let path = dir.join(STYLES_FILE);
    let styles_json = serde_json::to_string_pretty(styles).expect("styles serialize");
    std::fs::write(&path, styles_json).map_err(|e| CliError::io(&path, e))?;
    Ok(CorpusSummary {
        songs: corpus.songs.len(),
        segments: corpus.segment_count(),
        pairs: corpus.examples.len(),
        manifest_sha256: sha256_hex(manifest.as_bytes()),
    })
}

/// Reads a corpus written by [`write_corpus`], checking file hashes.
pub fn read_corpus(dir: &Path) -> Result<LoadedCorpus> {
    let path = dir.join(MANIFEST);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Config(format!("no corpus at {}: {e}", dir.display())))?;
    let bad = |n: usize, m: String| CliError::Runtime(format!("{}:{}: {m}", path.display(), n + 1));
    let mut header = None;
    let mut corpus = PairedCorpus::default();
    for (n, raw) in text.lines().enumerate() {
        let line: Line = serde_json::from_str(raw).map_err(|e| bad(n, e.to_string()))?;
        match line {
            Line::Header { format, config, styles, .. } => {
                if format != FORMAT {
                    return Err(bad(n, format!("unsupported corpus format '{format}'")));
                }
                header = Some((config, styles));
            }
            Line::Song(s) => {
                if s.id != corpus.songs.len() {
                    return Err(bad(n, format!("song id {} out of order", s.id)));
                }
                corpus.songs.push(s);
            }
            Line::Rendering { index, song_id, style, render_index, seed, midi, sha256 } => {
                if index != corpus.renderings.len() || song_id >= corpus.songs.len() {
                    return Err(bad(n, format!("rendering {index} out of order")));
                }
                let file = dir.join(&midi);
                let bytes = std::fs::read(&file).map_err(|e| CliError::io(&file, e))?;
                if sha256_hex(&bytes) != sha256 {
                    return Err(CliError::Runtime(format!("{}: content does not match the manifest hash", file.display())));
                }
                let song = read_midi(&bytes).map_err(|e| CliError::Runtime(format!("{}: {e}", file.display())))?;
                corpus.renderings.push(Rendering { song_id, style, render_index, seed, song });
            }
            Line::Pair(p) => {
                if p.source >= corpus.renderings.len() || p.target >= corpus.renderings.len() {
                    return Err(bad(n, "pair refers to an unknown rendering".into()));
                }
                corpus.examples.push(p);
            }
        }
    }
    let (config, names) = header.ok_or_else(|| bad(0, "missing header line".into()))?;
    let path = dir.join(STYLES_FILE);
    let styles_text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let styles: Vec<StyleSpec> =
        serde_json::from_str(&styles_text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    if styles.iter().map(|s| &s.name).ne(names.iter()) {
        return Err(CliError::Runtime(format!("{} does not match the manifest style list", path.display())));
    }
    Ok(LoadedCorpus { corpus, styles, config, manifest_sha256: sha256_hex(text.as_bytes()) })
}
