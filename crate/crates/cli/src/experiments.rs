//! Harness comparing models on fixed style pairs, such as a single-pair
//! model against the style-conditioned one on in-distribution and shifted
//! inputs.

use crate::error::Result;
use crate::eval::{model_rows, test_pairs, translate_pairs};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use stylox_core::arranger::{build_corpus, CorpusConfig, PairDirections, PairedCorpus, StyleSpec};
use stylox_core::chart::ChordChart;
use stylox_core::metrics::StyleProfile;
use stylox_model::data::TrackPair;
use stylox_model::{DecodeOptions, Model};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub model: String,
    pub test_set: String,
    pub source_style: String,
    pub target_style: String,
    pub content_preservation: f64,
    pub macro_style: f64,
    pub song_style_mean: f64,
    pub song_style_std: f64,
    pub anomaly_rate: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
}

impl Comparison {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "model,test_set,source_style,target_style,content_preservation,macro_style,song_style_mean,song_style_std,anomaly_rate\n",
        );
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
                r.model,
                r.test_set,
                r.source_style,
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

    pub fn get(&self, model: &str, test_set: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.model == model && r.test_set == test_set)
    }
}

/// A named held-out set: every pair `source -> target` in `corpus`'s test split.
pub struct TestSet<'a> {
    pub name: String,
    pub corpus: &'a PairedCorpus,
    pub source: String,
}

/// Renders `charts` in exactly `source` and `target`, all in the test split.
pub fn pair_test_set(
    charts: &[(String, ChordChart)],
    styles: &[StyleSpec],
    source: &str,
    target: &str,
    seed: u64,
) -> Result<PairedCorpus> {
    let cfg = CorpusConfig {
        k_styles_per_song: 2,
        renders_per_style: 1,
        seed,
        validation_songs: 0,
        test_songs: charts.len(),
        fixed_styles: Some(vec![source.to_string(), target.to_string()]),
        directions: PairDirections::Forward,
    };
    Ok(build_corpus(charts, styles, &cfg)?)
}

/// Translates every test set with every model into `target` and scores the
/// outputs against `reference`.
pub fn compare_models(
    models: &[(&str, &Model)],
    tracks: TrackPair,
    sets: &[TestSet<'_>],
    target: &str,
    reference: &StyleProfile,
    batch_size: usize,
) -> Result<Comparison> {
    let references: BTreeMap<String, StyleProfile> = [(target.to_string(), reference.clone())].into();
    let targets = [target.to_string()];
    let mut rows = Vec::new();
    for set in sets {
        let pairs = test_pairs(set.corpus, &targets, Some(&set.source));
        for (name, model) in models {
            let items = translate_pairs(model, set.corpus, tracks, &pairs, batch_size, &DecodeOptions::default())?;
            for r in model_rows(set.corpus, tracks, name, &items, &references, &targets)? {
                rows.push(ComparisonRow {
                    model: r.model,
                    test_set: set.name.clone(),
                    source_style: set.source.clone(),
                    target_style: r.target_style,
                    content_preservation: r.content_preservation,
                    macro_style: r.macro_style,
                    song_style_mean: r.song_style_mean,
                    song_style_std: r.song_style_std,
                    anomaly_rate: r.anomaly_rate,
                });
            }
        }
    }
    Ok(Comparison { rows })
}
