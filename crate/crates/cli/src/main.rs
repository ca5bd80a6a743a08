use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use stylox_cli::commands::{
    cmd_eval, cmd_export_embeddings, cmd_gen, cmd_profile, cmd_train, cmd_translate, parse_pair, EvalArgs, ProfileArgs,
    TrainArgs, TranslateArgs,
};
use stylox_cli::{CliError, ExperimentConfig, Result};
use stylox_core::midi_io::TrackSelector;
use stylox_model::DecodeOptions;

/// Accompaniment style translation: corpus generation, training, translation and evaluation.
#[derive(Debug, Parser)]
#[command(name = "stylox", version)]
struct Cli {
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render the configured charts in several styles and write a paired corpus.
    Gen {
        /// Corpus directory [default: <work_dir>/corpus]
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a translation model on a corpus.
    Train {
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Checkpoint to write [default: <work_dir>/model.ckpt]
        #[arg(long)]
        out: Option<PathBuf>,
        /// Training curve CSV [default: next to the checkpoint]
        #[arg(long)]
        curve: Option<PathBuf>,
        /// Train a single-pair model without style conditioning.
        #[arg(long, value_name = "SRC:DST")]
        pair: Option<String>,
        /// Continue from a checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Translate a MIDI file into one or all target styles.
    Translate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Target style, or `all` for one file per style.
        #[arg(long)]
        style: String,
        /// Input track (bass, piano, all) [default: the checkpoint's]
        #[arg(long)]
        track: Option<String>,
        /// Output file, or directory for `--style all`.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 16)]
        batch_size: usize,
        #[arg(long)]
        max_len: Option<usize>,
        /// Sample with this temperature instead of greedy decoding.
        #[arg(long)]
        temperature: Option<f32>,
    },
    /// Score a model (or saved outputs) on the corpus test split.
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Directory of translated outputs `pair{index:06}.mid`.
        #[arg(long)]
        outputs: Option<PathBuf>,
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Report CSV [default: <work_dir>/report.csv]
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the translated test outputs here.
        #[arg(long)]
        save_outputs: Option<PathBuf>,
        #[arg(long)]
        no_baselines: bool,
        /// Model column of the report [default: checkpoint file stem]
        #[arg(long)]
        name: Option<String>,
    },
    /// Style profiles of MIDI files and/or corpus styles, or their similarity matrix.
    Profile {
        inputs: Vec<PathBuf>,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, default_value = "bass")]
        track: String,
        /// Emit 984-value profile rows instead of a similarity matrix.
        #[arg(long)]
        rows: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the learned style embeddings as CSV.
    ExportEmbeddings {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(cli: &Cli, required: bool) -> Result<Option<ExperimentConfig>> {
    let Some(path) = &cli.config else {
        return if required { Err(CliError::Config("this command needs --config".into())) } else { Ok(None) };
    };
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(Some(cfg))
}

fn track(s: &str) -> Result<TrackSelector> {
    TrackSelector::parse(s).ok_or_else(|| CliError::Config(format!("unknown track '{s}' (bass, piano, all)")))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::io(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Gen { out } => {
            let cfg = load_config(&cli, true)?.expect("required");
            let dir = out.clone().unwrap_or_else(|| cfg.corpus_dir());
            let g = cmd_gen(&cfg, &dir)?;
            for f in &g.failures {
                eprintln!("excluded chart {f}");
            }
            println!("songs {} segments {} pairs {}", g.summary.songs, g.summary.segments, g.summary.pairs);
            for (split, n) in g.split_pairs {
                println!("  {split}: {n} pairs");
            }
            println!("manifest sha256 {}", g.summary.manifest_sha256);
            println!("corpus written to {}", dir.display());
        }
        Command::Train { corpus, out, curve, pair, resume } => {
            let cfg = load_config(&cli, true)?.expect("required");
            let checkpoint = out.clone().unwrap_or_else(|| cfg.checkpoint_path());
            let args = TrainArgs {
                corpus: corpus.clone().unwrap_or_else(|| cfg.corpus_dir()),
                curve: curve.clone().unwrap_or_else(|| checkpoint.with_extension("curve.csv")),
                checkpoint,
                pair: pair.as_deref().map(parse_pair).transpose()?,
                resume: resume.clone(),
                jobs: cli.jobs,
            };
            let t = cmd_train(&cfg, &args)?;
            println!(
                "{} steps (now at step {}); best validation loss {:.4}, accuracy {:.3} at step {}{}",
                t.report.steps,
                t.step,
                t.report.best_val_loss,
                t.report.best_val_accuracy,
                t.report.best_step,
                if t.report.stopped_early { "; stopped early" } else { "" }
            );
            println!("checkpoint {}", args.checkpoint.display());
            println!("curve {}", args.curve.display());
        }
        Command::Translate { checkpoint, input, style, track: sel, out, batch_size, max_len, temperature } => {
            let args = TranslateArgs {
                checkpoint: checkpoint.clone(),
                input: input.clone(),
                style: style.clone(),
                track: sel.as_deref().map(track).transpose()?,
                out: out.clone(),
                batch_size: *batch_size,
                decode: DecodeOptions { max_len: *max_len, temperature: *temperature, seed: cli.seed.unwrap_or(0) },
            };
            for t in cmd_translate(&args)? {
                println!(
                    "{}: {} segments, {} anomalies ({:?}), {} hit the length cap -> {}",
                    t.style,
                    t.segments,
                    t.anomalies.total(),
                    t.anomalies,
                    t.unterminated,
                    t.path.display()
                );
            }
        }
        Command::Eval { checkpoint, outputs, corpus, out, save_outputs, no_baselines, name } => {
            let cfg = load_config(&cli, false)?;
            let corpus = match (corpus, &cfg) {
                (Some(c), _) => c.clone(),
                (None, Some(cfg)) => cfg.corpus_dir(),
                (None, None) => return Err(CliError::Config("eval needs --corpus or --config".into())),
            };
            let report = match (out, &cfg) {
                (Some(p), _) => p.clone(),
                (None, Some(cfg)) => cfg.work_dir.join("report.csv"),
                (None, None) => PathBuf::from("report.csv"),
            };
            let model_name = name.clone().unwrap_or_else(|| {
                checkpoint
                    .as_ref()
                    .and_then(|c| c.file_stem())
                    .and_then(|s| s.to_str())
                    .unwrap_or("model")
                    .to_string()
            });
            let args = EvalArgs {
                corpus,
                checkpoint: checkpoint.clone(),
                outputs: outputs.clone(),
                save_outputs: save_outputs.clone(),
                report: report.clone(),
                baselines: !no_baselines && cfg.as_ref().is_none_or(|c| c.eval.baselines),
                model_name,
                tracks: match (&cfg, outputs) {
                    (Some(c), Some(_)) => Some(c.tracks.pair()?),
                    _ => None,
                },
                target_styles: cfg.as_ref().and_then(|c| c.eval.target_styles.clone()),
                batch_size: cfg.as_ref().map_or(32, |c| c.eval.batch_size),
                seed: cfg.as_ref().map_or(cli.seed.unwrap_or(0), |c| c.seed),
            };
            let r = cmd_eval(&args)?;
            print!("{}", r.to_csv());
            println!("report {}", report.display());
        }
        Command::Profile { inputs, corpus, track: sel, rows, out } => {
            let args = ProfileArgs { inputs: inputs.clone(), corpus: corpus.clone(), track: track(sel)?, rows: *rows };
            emit(out.as_deref(), &cmd_profile(&args)?)?;
        }
        Command::ExportEmbeddings { checkpoint, out } => {
            emit(out.as_deref(), &cmd_export_embeddings(checkpoint)?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.jobs.max(1)).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(1);
        }
    };
    match pool.install(|| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
