//! Objective evaluation on held-out pairs: content preservation against the
//! source track, macro and per-song style fit against training-split
//! reference profiles, and the `source` / `reference` / `random` baselines.

use crate::error::{CliError, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use stylox_core::arranger::{PairedCorpus, Split};
use stylox_core::codec::Segment;
use stylox_core::metrics::{content_preservation, randomized_baseline, style_fit_macro, style_fit_song, StyleProfile};
use stylox_model::data::{encode_input, TrackPair};
use stylox_model::{DecodeOptions, Model, ModelInput};

pub const BASELINES: [&str; 3] = ["source", "reference", "random"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: String,
    pub track: String,
    pub target_style: String,
    pub content_preservation: f64,
    pub macro_style: f64,
    pub song_style_mean: f64,
    pub song_style_std: f64,
    pub anomaly_rate: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub rows: Vec<ReportRow>,
}

impl EvaluationReport {
    pub const HEADER: &'static str =
        "model,track,target_style,content_preservation,macro_style,song_style_mean,song_style_std,anomaly_rate";

    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", Self::HEADER);
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
                r.model,
                r.track,
                r.target_style,
                r.content_preservation,
                r.macro_style,
                r.song_style_mean,
                r.song_style_std,
                r.anomaly_rate
            ));
        }
        s
    }

    pub fn row(&self, model: &str, target_style: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.model == model && r.target_style == target_style)
    }

    pub fn rows_for<'a>(&'a self, model: &'a str) -> impl Iterator<Item = &'a ReportRow> + 'a {
        self.rows.iter().filter(move |r| r.model == model)
    }

    /// Mean of a column over one model's rows.
    pub fn mean(&self, model: &str, column: fn(&ReportRow) -> f64) -> f64 {
        let v: Vec<f64> = self.rows_for(model).map(column).collect();
        if v.is_empty() {
            f64::NAN
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    }
}

/// One translated test pair. `pair` indexes `PairedCorpus::examples`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalItem {
    pub pair: usize,
    pub output: Segment,
    /// Decoding irregularities, counting a missing EOS as one.
    pub anomalies: u32,
}

/// Test-split pairs whose target style is in `targets`, optionally limited
/// to one source style.
pub fn test_pairs(corpus: &PairedCorpus, targets: &[String], source: Option<&str>) -> Vec<usize> {
    corpus
        .examples
        .iter()
        .enumerate()
        .filter(|(_, e)| e.split == Split::Test && targets.contains(&e.target_style))
        .filter(|(_, e)| source.is_none_or(|s| e.source_style == s))
        .map(|(i, _)| i)
        .collect()
}

/// Greedy-translates the source side of each pair into its target style.
/// Batches run in parallel on the current rayon pool; results keep the
/// order of `pairs`.
pub fn translate_pairs(
    model: &Model,
    corpus: &PairedCorpus,
    tracks: TrackPair,
    pairs: &[usize],
    batch_size: usize,
    opts: &DecodeOptions,
) -> Result<Vec<EvalItem>> {
    let mut by_style: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &p in pairs {
        let style = model_style(model, &corpus.examples[p].target_style)?;
        by_style.entry(style).or_default().push(p);
    }
    let jobs: Vec<(usize, &[usize])> =
        by_style.iter().flat_map(|(&s, ps)| ps.chunks(batch_size.max(1)).map(move |c| (s, c))).collect();
    let done: Vec<Vec<EvalItem>> = jobs
        .par_iter()
        .map(|&(style, chunk)| {
            let inputs: Vec<ModelInput> = chunk
                .iter()
                .map(|&p| {
                    let e = &corpus.examples[p];
                    encode_input(&corpus.segment(e.source, tracks.input, e.segment_index), model.config.variant, tracks.input)
                })
                .collect();
            let refs: Vec<&ModelInput> = inputs.iter().collect();
            let out = model.translate_batch(&refs, style, opts)?;
            Ok(chunk
                .iter()
                .zip(out)
                .map(|(&pair, t)| EvalItem {
                    pair,
                    anomalies: t.decoded.anomalies.total() + u32::from(!t.terminated),
                    output: t.decoded.segment,
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut items: BTreeMap<usize, EvalItem> = done.into_iter().flatten().map(|i| (i.pair, i)).collect();
    Ok(pairs.iter().filter_map(|p| items.remove(p)).collect())
}

/// Style id for a target name; unconditioned models accept only their own.
pub fn model_style(model: &Model, name: &str) -> Result<usize> {
    if model.config.style_conditioning {
        return Ok(model.style_index(name)?);
    }
    match model.styles.first() {
        Some(s) if s.name == name => Ok(0),
        _ => Err(CliError::Config(format!(
            "model was trained for the single target '{}' and cannot produce '{name}'",
            model.styles.first().map_or("?", |s| s.name.as_str())
        ))),
    }
}

fn reference_for<'a>(references: &'a BTreeMap<String, StyleProfile>, style: &str) -> Result<&'a StyleProfile> {
    references
        .get(style)
        .filter(|p| !p.is_zero())
        .ok_or_else(|| CliError::Runtime(format!("no training-split reference profile for style '{style}'")))
}

/// Scores one set of outputs. `outputs[i]` is compared with the source
/// track of `pairs[i]`.
#[allow(clippy::too_many_arguments)]
fn score_rows(
    corpus: &PairedCorpus,
    tracks: TrackPair,
    name: &str,
    pairs: &[usize],
    outputs: &[&Segment],
    anomalies: &[u32],
    references: &BTreeMap<String, StyleProfile>,
    targets: &[String],
) -> Result<Vec<ReportRow>> {
    let mut rows = Vec::new();
    for style in targets {
        let idx: Vec<usize> = (0..pairs.len()).filter(|&i| &corpus.examples[pairs[i]].target_style == style).collect();
        if idx.is_empty() {
            log::warn!("{name}: no test pairs for target style '{style}'");
            continue;
        }
        let reference = reference_for(references, style)?;
        let mut cp = 0.0;
        let mut by_song: BTreeMap<usize, Vec<Segment>> = BTreeMap::new();
        for &i in &idx {
            let e = &corpus.examples[pairs[i]];
            let source = corpus.segment(e.source, tracks.output, e.segment_index);
            cp += content_preservation(outputs[i], &source).map_err(|err| CliError::Runtime(err.to_string()))?;
            by_song.entry(e.song_id).or_default().push(outputs[i].clone());
        }
        let fit = style_fit_macro(idx.iter().map(|&i| outputs[i]), reference);
        let songs: Vec<Vec<Segment>> = by_song.into_values().collect();
        let song_fit = style_fit_song(&songs, reference);
        if fit.flagged || song_fit.flagged > 0 {
            log::warn!("{name} -> {style}: outputs without note pairs ({} songs)", song_fit.flagged);
        }
        let n = idx.len() as f64;
        rows.push(ReportRow {
            model: name.to_string(),
            track: tracks.output.to_string(),
            target_style: style.clone(),
            content_preservation: cp / n,
            macro_style: fit.score,
            song_style_mean: song_fit.mean,
            song_style_std: song_fit.std,
            anomaly_rate: idx.iter().map(|&i| anomalies[i] as f64).sum::<f64>() / n,
        });
    }
    Ok(rows)
}

/// Rows for translated outputs, one per target style.
pub fn model_rows(
    corpus: &PairedCorpus,
    tracks: TrackPair,
    name: &str,
    items: &[EvalItem],
    references: &BTreeMap<String, StyleProfile>,
    targets: &[String],
) -> Result<Vec<ReportRow>> {
    let pairs: Vec<usize> = items.iter().map(|i| i.pair).collect();
    let outputs: Vec<&Segment> = items.iter().map(|i| &i.output).collect();
    let anomalies: Vec<u32> = items.iter().map(|i| i.anomalies).collect();
    score_rows(corpus, tracks, name, &pairs, &outputs, &anomalies, references, targets)
}

/// Baseline rows per target style: `source` passes the source track through
/// unchanged, `reference` uses the target rendering, and `random` pairs each
/// source with a different reference segment of the same style.
pub fn baseline_rows(
    corpus: &PairedCorpus,
    tracks: TrackPair,
    pairs: &[usize],
    references: &BTreeMap<String, StyleProfile>,
    targets: &[String],
    seed: u64,
) -> Result<Vec<ReportRow>> {
    let seg = |rendering: usize, index: usize| corpus.segment(rendering, tracks.output, index);
    let zeros = vec![0u32; pairs.len()];
    let mut rows = Vec::new();

    let sources: Vec<Segment> =
        pairs.iter().map(|&p| seg(corpus.examples[p].source, corpus.examples[p].segment_index)).collect();
    let refs: Vec<&Segment> = sources.iter().collect();
    rows.extend(score_rows(corpus, tracks, "source", pairs, &refs, &zeros, references, targets)?);

    // Distinct reference segments per style; pairs that share a target
    // rendering and segment share a reference.
    let mut keys: BTreeMap<&str, Vec<(usize, usize)>> = BTreeMap::new();
    let mut key_of = Vec::with_capacity(pairs.len());
    for &p in pairs {
        let e = &corpus.examples[p];
        let list = keys.entry(e.target_style.as_str()).or_default();
        let key = (e.target, e.segment_index);
        let pos = match list.iter().position(|k| *k == key) {
            Some(i) => i,
            None => {
                list.push(key);
                list.len() - 1
            }
        };
        key_of.push(pos);
    }
    let targets_seg: Vec<Segment> =
        pairs.iter().map(|&p| seg(corpus.examples[p].target, corpus.examples[p].segment_index)).collect();
    let refs: Vec<&Segment> = targets_seg.iter().collect();
    rows.extend(score_rows(corpus, tracks, "reference", pairs, &refs, &zeros, references, targets)?);

    let counts: BTreeMap<String, usize> = keys.iter().map(|(k, v)| (k.to_string(), v.len())).collect();
    let perms = randomized_baseline(&counts, seed);
    let permuted: Vec<Segment> = pairs
        .iter()
        .zip(&key_of)
        .map(|(&p, &pos)| {
            let style = corpus.examples[p].target_style.as_str();
            let (rendering, index) = keys[style][perms[style][pos]];
            seg(rendering, index)
        })
        .collect();
    let refs: Vec<&Segment> = permuted.iter().collect();
    rows.extend(score_rows(corpus, tracks, "random", pairs, &refs, &zeros, references, targets)?);
    Ok(rows)
}
