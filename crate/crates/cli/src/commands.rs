//! The subcommands as library functions. Each returns its result instead of
//! printing; `main` handles output and exit codes.

use crate::config::{ExperimentConfig, TrackSpec};
use crate::corpus_io::{read_charts, read_corpus, write_corpus, ChartFailure, CorpusSummary, LoadedCharts, MANIFEST};
use crate::error::{CliError, Result};
use crate::eval::{baseline_rows, model_rows, model_style, test_pairs, translate_pairs, EvalItem, EvaluationReport};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use stylox_core::arranger::{build_corpus, Split};
use stylox_core::chart::random_chart;
use stylox_core::codec::{concat_segments, segment, segment_with_length, Anomalies, Segment, BEATS_PER_BAR, SEGMENT_BEATS};
use stylox_core::metrics::{reference_profiles, segments_profile, similarity_of, StyleProfile, PROFILE_LEN};
use stylox_core::midi_io::{extract_track, read_midi_file, read_midi_with_warnings, write_midi_file, Song, TrackSelector};
use stylox_core::Role;
use stylox_model::data::{corpus_examples, encode_input, PairFilter, TrackPair};
use stylox_model::{train, DecodeOptions, Model, ModelInput, StyleInfo, TrainReport};

/// Training state stored next to the parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointExtra {
    pub tracks: TrackSpec,
    /// Source and target style of a single-pair model.
    pub pair: Option<(String, String)>,
    pub learning_rate: f32,
    pub best_step: u64,
    pub corpus_sha256: String,
}

pub fn load_model(path: &Path) -> Result<(Model, CheckpointExtra)> {
    if !path.is_file() {
        return Err(CliError::Config(format!("checkpoint {} does not exist", path.display())));
    }
    let (model, extra) = Model::load(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    let extra: CheckpointExtra = serde_json::from_value(extra)
        .map_err(|e| CliError::Runtime(format!("{}: missing training metadata: {e}", path.display())))?;
    Ok((model, extra))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

// ---------------------------------------------------------------- gen

#[derive(Debug, Clone)]
pub struct GenOutcome {
    pub summary: CorpusSummary,
    pub failures: Vec<ChartFailure>,
    pub split_pairs: [(Split, usize); 3],
}

/// Chart files (sorted by name) followed by any generated charts.
pub fn collect_charts(cfg: &ExperimentConfig) -> Result<LoadedCharts> {
    let (mut charts, failures) = match &cfg.corpus.charts_dir {
        Some(dir) => read_charts(dir)?,
        None => (Vec::new(), Vec::new()),
    };
    if let Some(r) = &cfg.corpus.random_charts {
        for i in 0..r.count {
            let seed = r.seed.wrapping_add(i as u64);
            charts.push((format!("random_{seed:05}"), random_chart(seed, r.bars, r.time_signature)));
        }
    }
    Ok((charts, failures))
}

pub fn cmd_gen(cfg: &ExperimentConfig, out: &Path) -> Result<GenOutcome> {
    let styles = cfg.styles()?;
    let (charts, failures) = collect_charts(cfg)?;
    for f in &failures {
        log::warn!("skipping chart {f}");
    }
    if charts.is_empty() {
        return Err(CliError::Runtime("no usable charts".into()));
    }
    let held_out = cfg.corpus.validation_songs + cfg.corpus.test_songs;
    if held_out >= charts.len() {
        return Err(CliError::Config(format!(
            "{held_out} validation + test songs leave no training songs out of {}",
            charts.len()
        )));
    }
    let corpus_cfg = cfg.corpus_config();
    let corpus = build_corpus(&charts, &styles, &corpus_cfg)?;
    if out.join(MANIFEST).is_file() {
        for sub in ["midi", "charts"] {
            let d = out.join(sub);
            if d.is_dir() {
                std::fs::remove_dir_all(&d).map_err(|e| CliError::io(&d, e))?;
            }
        }
    }
    let summary = write_corpus(out, &corpus, &charts, &styles, &corpus_cfg, &failures)?;
    Ok(GenOutcome { summary, failures, split_pairs: CorpusSummary::split_pairs(&corpus) })
}

// ---------------------------------------------------------------- train

#[derive(Debug, Clone, Default)]
pub struct TrainArgs {
    pub corpus: PathBuf,
    pub checkpoint: PathBuf,
    pub curve: PathBuf,
    pub pair: Option<(String, String)>,
    pub resume: Option<PathBuf>,
    pub jobs: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub report: TrainReport,
    pub train_examples: usize,
    pub validation_examples: usize,
    /// Optimizer step count of the saved parameters.
    pub step: u64,
}

pub fn parse_pair(s: &str) -> Result<(String, String)> {
    match s.split_once(':') {
        Some((a, b)) if !a.is_empty() && !b.is_empty() && a != b => Ok((a.to_string(), b.to_string())),
        _ => Err(CliError::Config(format!("--pair expects SRC:DST with two different styles, got '{s}'"))),
    }
}

pub fn cmd_train(cfg: &ExperimentConfig, args: &TrainArgs) -> Result<TrainOutcome> {
    let loaded = read_corpus(&args.corpus)?;
    let tracks = cfg.tracks.pair()?;
    let all: Vec<StyleInfo> =
        loaded.styles.iter().map(|s| StyleInfo { name: s.name.clone(), feel: s.feel.to_string() }).collect();
    let known = |name: &str| {
        if all.iter().any(|s| s.name == name) {
            Ok(())
        } else {
            Err(CliError::Config(format!(
                "unknown style '{name}'; available: {}",
                all.iter().map(|s| s.name.as_str()).collect::<Vec<_>>().join(", ")
            )))
        }
    };
    let (filter, styles) = match &args.pair {
        Some((src, dst)) => {
            known(src)?;
            known(dst)?;
            let info = all.iter().find(|s| &s.name == dst).cloned().expect("checked above");
            (PairFilter { only: Some((src.clone(), dst.clone())) }, vec![info])
        }
        None => {
            if !cfg.model.style_conditioning {
                return Err(CliError::Config("a model without style conditioning needs --pair SRC:DST".into()));
            }
            (PairFilter::default(), all.clone())
        }
    };
    let mut tc = cfg.train_config(args.jobs);
    let mut model = match &args.resume {
        Some(path) => {
            let (model, extra) = load_model(path)?;
            if model.styles != styles {
                return Err(CliError::Config(format!(
                    "checkpoint styles [{}] do not match the corpus [{}]",
                    model.styles.iter().map(|s| s.name.as_str()).collect::<Vec<_>>().join(", "),
                    styles.iter().map(|s| s.name.as_str()).collect::<Vec<_>>().join(", ")
                )));
            }
            if extra.tracks != cfg.tracks || extra.pair != args.pair {
                return Err(CliError::Config("checkpoint was trained on a different track pair or style pair".into()));
            }
            tc.learning_rate = extra.learning_rate;
            model
        }
        None => {
            let mut mc = cfg.model.clone();
            mc.num_styles = styles.len();
            mc.style_conditioning = args.pair.is_none();
            Model::new(mc, styles.clone(), cfg.seed)?
        }
    };
    let variant = model.config.variant;
    let train_ex = corpus_examples(&loaded.corpus, tracks, variant, &model.styles, Split::Train, &filter)?;
    let val_ex = corpus_examples(&loaded.corpus, tracks, variant, &model.styles, Split::Validation, &filter)?;
    if train_ex.is_empty() {
        return Err(CliError::Runtime(match &args.pair {
            Some((a, b)) => format!("corpus has no training pairs {a} -> {b}"),
            None => "corpus has no training pairs".into(),
        }));
    }
    log::info!(
        "training {} ({} -> {}): {} train / {} validation examples, {} parameters",
        variant,
        tracks.input,
        tracks.output,
        train_ex.len(),
        val_ex.len(),
        model.params.num_scalars()
    );
    let report = train(&mut model, &train_ex, &val_ex, &tc)?;
    let extra = CheckpointExtra {
        tracks: cfg.tracks,
        pair: args.pair.clone(),
        learning_rate: report.final_lr,
        best_step: report.best_step,
        corpus_sha256: loaded.manifest_sha256.clone(),
    };
    if let Some(dir) = args.checkpoint.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    model
        .save(&args.checkpoint, true, serde_json::to_value(&extra).expect("extra serializes"))
        .map_err(|e| CliError::Runtime(format!("{}: {e}", args.checkpoint.display())))?;
    write(&args.curve, &report.curve_csv())?;
    Ok(TrainOutcome {
        train_examples: train_ex.len(),
        validation_examples: val_ex.len(),
        step: model.params.step(),
        report,
    })
}

// ---------------------------------------------------------------- translate

#[derive(Debug, Clone)]
pub struct TranslateArgs {
    pub checkpoint: PathBuf,
    pub input: PathBuf,
    /// A style name or `all`.
    pub style: String,
    /// Input track; the checkpoint's input track when unset.
    pub track: Option<TrackSelector>,
    /// Output file, or a directory when translating into several styles.
    pub out: PathBuf,
    pub batch_size: usize,
    pub decode: DecodeOptions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TranslateOutcome {
    pub style: String,
    pub path: PathBuf,
    pub segments: usize,
    pub anomalies: Anomalies,
    /// Segments cut off by the length cap before EOS.
    pub unterminated: usize,
}

fn add_anomalies(a: &mut Anomalies, b: &Anomalies) {
    a.unmatched_off += b.unmatched_off;
    a.repeated_on += b.repeated_on;
    a.time_overflow += b.time_overflow;
    a.unclosed += b.unclosed;
    a.empty_note += b.empty_note;
    a.misplaced += b.misplaced;
}

fn output_role(track: TrackSelector) -> Role {
    if track == TrackSelector::Piano {
        Role::Piano
    } else {
        Role::Bass
    }
}

/// Segments of one track, padded to the length of the whole song.
pub fn song_segments(song: &Song, track: TrackSelector) -> Vec<Segment> {
    let bpb = BEATS_PER_BAR as f64;
    let length = (song.end() / bpb - 1e-9).ceil().max(0.0) * bpb;
    segment_with_length(&extract_track(song, track), Some(length))
}

pub fn cmd_translate(args: &TranslateArgs) -> Result<Vec<TranslateOutcome>> {
    let (model, extra) = load_model(&args.checkpoint)?;
    let input_track = args.track.unwrap_or(extra.tracks.input);
    let tracks = TrackPair::new(input_track, extra.tracks.output)?;
    let styles: Vec<String> = if args.style == "all" {
        model.styles.iter().map(|s| s.name.clone()).collect()
    } else {
        if !model.styles.iter().any(|s| s.name == args.style) {
            return Err(CliError::Config(format!(
                "unknown style '{}'; available: {}",
                args.style,
                model.styles.iter().map(|s| s.name.as_str()).collect::<Vec<_>>().join(", ")
            )));
        }
        vec![args.style.clone()]
    };
    let bytes = std::fs::read(&args.input).map_err(|e| CliError::io(&args.input, e))?;
    let (song, warnings) =
        read_midi_with_warnings(&bytes).map_err(|e| CliError::Runtime(format!("{}: {e}", args.input.display())))?;
    for w in warnings {
        log::warn!("{}: {w:?}", args.input.display());
    }
    let segments = song_segments(&song, tracks.input);
    if segments.iter().all(Segment::is_empty) {
        log::warn!("{} has no {} notes; writing empty output", args.input.display(), tracks.input);
    }
    let inputs: Vec<ModelInput> =
        segments.iter().map(|s| encode_input(s, model.config.variant, tracks.input)).collect();
    let many = styles.len() > 1 || args.out.is_dir();
    let stem = args.input.file_stem().and_then(|s| s.to_str()).unwrap_or("input");
    let mut outcomes = Vec::new();
    for style in styles {
        let id = model_style(&model, &style)?;
        let mut decoded = Vec::with_capacity(inputs.len());
        let mut anomalies = Anomalies::default();
        let mut unterminated = 0;
        let chunks: Vec<&[ModelInput]> = inputs.chunks(args.batch_size.max(1)).collect();
        let results = chunks
            .par_iter()
            .map(|chunk| model.translate_batch(&chunk.iter().collect::<Vec<_>>(), id, &args.decode))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        for t in results.into_iter().flatten() {
            add_anomalies(&mut anomalies, &t.decoded.anomalies);
            unterminated += usize::from(!t.terminated);
            decoded.push(t.decoded.segment);
        }
        let mut out_song = Song::new(song.time_signature);
        let role = output_role(tracks.output);
        out_song.add_track(format!("{style} {role}"), role, concat_segments(&decoded, song.time_signature));
        let path = if many { args.out.join(format!("{stem}_{style}.mid")) } else { args.out.clone() };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        write_midi_file(&out_song, &path)?;
        outcomes.push(TranslateOutcome { style, path, segments: decoded.len(), anomalies, unterminated });
    }
    Ok(outcomes)
}

// ---------------------------------------------------------------- eval

#[derive(Debug, Clone)]
pub struct EvalArgs {
    pub corpus: PathBuf,
    pub checkpoint: Option<PathBuf>,
    /// Directory of previously translated outputs named `pair{index:06}.mid`.
    pub outputs: Option<PathBuf>,
    /// Where to write the translated test outputs.
    pub save_outputs: Option<PathBuf>,
    pub report: PathBuf,
    pub baselines: bool,
    pub model_name: String,
    /// Track pair for `outputs`; checkpoints carry their own.
    pub tracks: Option<TrackPair>,
    pub target_styles: Option<Vec<String>>,
    pub batch_size: usize,
    pub seed: u64,
}

const ANOMALIES_FILE: &str = "anomalies.csv";

fn output_name(pair: usize) -> String {
    format!("pair{pair:06}.mid")
}

fn save_outputs(dir: &Path, items: &[EvalItem], tracks: TrackPair) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut counts = String::from("pair,anomalies\n");
    let role = output_role(tracks.output);
    for item in items {
        let mut song = Song::new(item.output.notes.time_signature);
        song.add_track(role.to_string(), role, item.output.notes.clone());
        write_midi_file(&song, dir.join(output_name(item.pair)))?;
        counts.push_str(&format!("{},{}\n", item.pair, item.anomalies));
    }
    write(&dir.join(ANOMALIES_FILE), &counts)
}

fn load_outputs(dir: &Path, pairs: &[usize], tracks: TrackPair) -> Result<Vec<EvalItem>> {
    let mut anomalies = BTreeMap::new();
    if let Ok(text) = std::fs::read_to_string(dir.join(ANOMALIES_FILE)) {
        for line in text.lines().skip(1) {
            if let Some((p, a)) = line.split_once(',') {
                if let (Ok(p), Ok(a)) = (p.parse::<usize>(), a.parse::<u32>()) {
                    anomalies.insert(p, a);
                }
            }
        }
    }
    let mut items = Vec::new();
    let mut missing = 0;
    for &pair in pairs {
        let path = dir.join(output_name(pair));
        if !path.is_file() {
            missing += 1;
            continue;
        }
        let song = read_midi_file(&path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        let track = extract_track(&song, tracks.output);
        let output = segment_with_length(&track, Some(SEGMENT_BEATS as f64)).pop().unwrap_or_else(Segment::empty);
        items.push(EvalItem { pair, output, anomalies: anomalies.get(&pair).copied().unwrap_or(0) });
    }
    if missing > 0 {
        log::warn!("{missing} of {} test outputs missing from {}; excluded", pairs.len(), dir.display());
    }
    Ok(items)
}

pub fn cmd_eval(args: &EvalArgs) -> Result<EvaluationReport> {
    let loaded = read_corpus(&args.corpus)?;
    let corpus = &loaded.corpus;
    let (tracks, targets, items) = match (&args.checkpoint, &args.outputs) {
        (Some(ck), None) => {
            let (model, extra) = load_model(ck)?;
            let tracks = match args.tracks {
                Some(t) => t,
                None => extra.tracks.pair()?,
            };
            let targets = match &args.target_styles {
                Some(t) => t.clone(),
                None => model.styles.iter().map(|s| s.name.clone()).collect(),
            };
            for t in &targets {
                model_style(&model, t)?;
            }
            let source = extra.pair.as_ref().map(|p| p.0.as_str());
            let pairs = test_pairs(corpus, &targets, source);
            let decode = DecodeOptions { seed: args.seed, ..DecodeOptions::default() };
            let items = translate_pairs(&model, corpus, tracks, &pairs, args.batch_size, &decode)?;
            if let Some(dir) = &args.save_outputs {
                save_outputs(dir, &items, tracks)?;
            }
            (tracks, targets, items)
        }
        (None, Some(dir)) => {
            let tracks = args.tracks.ok_or_else(|| CliError::Config("evaluating an outputs directory needs the track pair".into()))?;
            let targets = args.target_styles.clone().unwrap_or_else(|| loaded.styles.iter().map(|s| s.name.clone()).collect());
            let pairs = test_pairs(corpus, &targets, None);
            (tracks, targets, load_outputs(dir, &pairs, tracks)?)
        }
        _ => return Err(CliError::Config("eval needs exactly one of --checkpoint and --outputs".into())),
    };
    if items.is_empty() {
        return Err(CliError::Runtime("no test pairs to evaluate; does the corpus have test songs?".into()));
    }
    let references = reference_profiles(corpus, tracks.output);
    let mut report = EvaluationReport { rows: model_rows(corpus, tracks, &args.model_name, &items, &references, &targets)? };
    if args.baselines {
        let pairs: Vec<usize> = items.iter().map(|i| i.pair).collect();
        report.rows.extend(baseline_rows(corpus, tracks, &pairs, &references, &targets, args.seed)?);
    }
    write(&args.report, &report.to_csv())?;
    Ok(report)
}

// ---------------------------------------------------------------- profile

#[derive(Debug, Clone)]
pub struct ProfileArgs {
    pub inputs: Vec<PathBuf>,
    /// Adds one training-split reference profile per style.
    pub corpus: Option<PathBuf>,
    pub track: TrackSelector,
    /// Emit profile rows even for several inputs.
    pub rows: bool,
}

/// Profile rows as CSV: a name column then 984 bins, time bin major.
pub fn profile_rows_csv(profiles: &[(String, StyleProfile)]) -> String {
    let mut s = String::from("name");
    for i in 0..PROFILE_LEN {
        s.push_str(&format!(",p{i}"));
    }
    s.push('\n');
    for (name, p) in profiles {
        s.push_str(name);
        for v in &p.values {
            s.push_str(&format!(",{v}"));
        }
        s.push('\n');
    }
    s
}

pub fn cmd_profile(args: &ProfileArgs) -> Result<String> {
    let mut profiles: Vec<(String, StyleProfile)> = Vec::new();
    if let Some(dir) = &args.corpus {
        let loaded = read_corpus(dir)?;
        profiles.extend(reference_profiles(&loaded.corpus, args.track));
    }
    for path in &args.inputs {
        let song = read_midi_file(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        let segs = segment(&extract_track(&song, args.track));
        let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("input").to_string();
        profiles.push((name, segments_profile(&segs)));
    }
    if profiles.is_empty() {
        return Err(CliError::Config("profile needs MIDI files or --corpus".into()));
    }
    if args.rows || (profiles.len() == 1 && args.corpus.is_none()) {
        return Ok(profile_rows_csv(&profiles));
    }
    let names = profiles.iter().map(|p| p.0.clone()).collect();
    let list: Vec<&StyleProfile> = profiles.iter().map(|p| &p.1).collect();
    let m = similarity_of(names, &list).map_err(|e| CliError::Config(format!("similarity matrix: {e}")))?;
    Ok(m.to_csv(true))
}

// ---------------------------------------------------------------- export-embeddings

pub fn cmd_export_embeddings(checkpoint: &Path) -> Result<String> {
    let (model, _) = load_model(checkpoint)?;
    Ok(model.style_embeddings_csv()?)
}
