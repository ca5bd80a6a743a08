//! Experiment configuration: one JSON file naming the corpus, model,
//! training and evaluation settings. Relative paths resolve against the
//! directory holding the file.

use crate::error::{CliError, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use stylox_core::arranger::{builtin_styles, find_style, CorpusConfig, PairDirections, StyleSpec};
use stylox_core::midi_io::TrackSelector;
use stylox_core::TimeSignature;
use stylox_model::data::TrackPair;
use stylox_model::{ModelConfig, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Drives model initialization, batch order and, unless the corpus sets
    /// its own, corpus generation. `--seed` overrides it.
    #[serde(default)]
    pub seed: u64,
    /// Default location for the corpus, checkpoints and reports.
    #[serde(default = "default_work_dir")]
    pub work_dir: PathBuf,
    pub corpus: CorpusSpec,
    #[serde(default)]
    pub model: ModelConfig,
    /// `train.seed` and `train.jobs` are replaced by the top-level seed and
    /// `--jobs`.
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub tracks: TrackSpec,
    #[serde(default)]
    pub eval: EvalSpec,
}

fn default_work_dir() -> PathBuf {
    PathBuf::from("work")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSpec {
    /// Directory of chord chart text files (`*.txt` or `*.chart`).
    #[serde(default)]
    pub charts_dir: Option<PathBuf>,
    /// Generated charts, appended after any files.
    #[serde(default)]
    pub random_charts: Option<RandomCharts>,
    /// Built-in style names, in order. All built-in styles when unset.
    #[serde(default)]
    pub styles: Option<Vec<String>>,
    /// Extra styles as JSON files, appended after the built-in ones.
    #[serde(default)]
    pub style_files: Vec<PathBuf>,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_renders")]
    pub renders_per_style: u32,
    #[serde(default)]
    pub validation_songs: usize,
    #[serde(default)]
    pub test_songs: usize,
    /// Render every song in exactly these styles instead of sampling `k`.
    #[serde(default)]
    pub fixed_styles: Option<Vec<String>>,
    #[serde(default = "default_directions")]
    pub directions: PairDirections,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_k() -> usize {
    3
}

fn default_renders() -> u32 {
    1
}

fn default_directions() -> PairDirections {
    PairDirections::Both
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomCharts {
    pub count: usize,
    #[serde(default = "default_bars")]
    pub bars: usize,
    #[serde(default)]
    pub time_signature: TimeSignature,
    /// Chart i uses seed `seed + i`.
    #[serde(default)]
    pub seed: u64,
}

fn default_bars() -> usize {
    16
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackSpec {
    pub input: TrackSelector,
    pub output: TrackSelector,
}

impl Default for TrackSpec {
    fn default() -> Self {
        TrackSpec { input: TrackSelector::All, output: TrackSelector::Bass }
    }
}

impl TrackSpec {
    pub fn pair(&self) -> Result<TrackPair> {
        Ok(TrackPair::new(self.input, self.output)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSpec {
    /// Styles to translate into; every style the model knows when unset.
    pub target_styles: Option<Vec<String>>,
    pub baselines: bool,
    pub batch_size: usize,
}

impl Default for EvalSpec {
    fn default() -> Self {
        EvalSpec { target_styles: None, baselines: true, batch_size: 32 }
    }
}

impl ExperimentConfig {
    /// Minimal config over random charts; mostly for tests.
    pub fn with_random_charts(count: usize, bars: usize) -> ExperimentConfig {
        ExperimentConfig {
            seed: 0,
            work_dir: default_work_dir(),
            corpus: CorpusSpec {
                charts_dir: None,
                random_charts: Some(RandomCharts { count, bars, time_signature: TimeSignature::FourFour, seed: 0 }),
                styles: None,
                style_files: Vec::new(),
                k: default_k(),
                renders_per_style: 1,
                validation_songs: 0,
                test_songs: 0,
                fixed_styles: None,
                directions: PairDirections::Both,
                seed: None,
            },
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            tracks: TrackSpec::default(),
            eval: EvalSpec::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<ExperimentConfig> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))
    }

    /// Reads, resolves paths and validates.
    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = ExperimentConfig::from_json(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.work_dir);
        if let Some(d) = self.corpus.charts_dir.as_mut() {
            fix(d);
        }
        for f in &mut self.corpus.style_files {
            fix(f);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.corpus;
        if c.charts_dir.is_none() && c.random_charts.is_none() {
            return Err(CliError::Config("corpus needs charts_dir or random_charts".into()));
        }
        if let Some(d) = &c.charts_dir {
            if !d.is_dir() {
                return Err(CliError::Config(format!("charts_dir {} does not exist", d.display())));
            }
        }
        for f in &c.style_files {
            if !f.is_file() {
                return Err(CliError::Config(format!("style file {} does not exist", f.display())));
            }
        }
        if c.renders_per_style == 0 {
            return Err(CliError::Config("renders_per_style must be positive".into()));
        }
        let styles = self.styles()?;
        match &c.fixed_styles {
            Some(fixed) => {
                for name in fixed {
                    if find_style(&styles, name).is_none() {
                        return Err(unknown_style(name, &styles));
                    }
                }
            }
            None if c.k < 2 => return Err(CliError::Config(format!("k = {} gives no pairs; need k >= 2", c.k))),
            None if c.k > styles.len() => {
                return Err(CliError::Config(format!("k = {} exceeds the {} available styles", c.k, styles.len())))
            }
            None => {}
        }
        self.tracks.pair()?;
        let mut model = self.model.clone();
        model.num_styles = styles.len();
        model.validate()?;
        if let Some(targets) = &self.eval.target_styles {
            for name in targets {
                if find_style(&styles, name).is_none() {
                    return Err(unknown_style(name, &styles));
                }
            }
        }
        if self.eval.batch_size == 0 || self.train.batch_size == 0 {
            return Err(CliError::Config("batch sizes must be positive".into()));
        }
        Ok(())
    }

    /// The style set: selected built-in styles, then any style files.
    pub fn styles(&self) -> Result<Vec<StyleSpec>> {
        let builtin = builtin_styles();
        let mut out = match &self.corpus.styles {
            None => builtin.clone(),
            Some(names) => names
                .iter()
                .map(|n| find_style(&builtin, n).cloned().ok_or_else(|| unknown_style(n, &builtin)))
                .collect::<Result<Vec<_>>>()?,
        };
        for path in &self.corpus.style_files {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            let style = StyleSpec::from_json(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            if out.iter().any(|s| s.name == style.name) {
                return Err(CliError::Config(format!("{}: duplicate style '{}'", path.display(), style.name)));
            }
            out.push(style);
        }
        Ok(out)
    }

    pub fn corpus_config(&self) -> CorpusConfig {
        let c = &self.corpus;
        CorpusConfig {
            k_styles_per_song: c.k,
            renders_per_style: c.renders_per_style,
            seed: c.seed.unwrap_or(self.seed),
            validation_songs: c.validation_songs,
            test_songs: c.test_songs,
            fixed_styles: c.fixed_styles.clone(),
            directions: c.directions,
        }
    }

    /// Training settings with the run seed and thread count filled in.
    pub fn train_config(&self, jobs: usize) -> TrainConfig {
        TrainConfig { seed: self.seed, jobs: jobs.max(1), ..self.train.clone() }
    }

    pub fn corpus_dir(&self) -> PathBuf {
        self.work_dir.join("corpus")
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.work_dir.join("model.ckpt")
    }
}

fn unknown_style(name: &str, styles: &[StyleSpec]) -> CliError {
    CliError::Config(format!(
        "unknown style '{name}'; available: {}",
        styles.iter().map(|s| s.name.as_str()).collect::<Vec<_>>().join(", ")
    ))
}
