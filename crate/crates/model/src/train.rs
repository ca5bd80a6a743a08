//! Minibatch training with bucketing, plateau learning-rate decay and
//! early stopping on validation loss.

use crate::model::{Example, LossStats, Model};
use crate::ModelError;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use stylox_core::codec::TokenVocab;
use stylox_numeric::adam::Grads;
use stylox_numeric::{AdamConfig, NumericError, ParamStore, Rng, Tape};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f32,
    /// Multiplier applied after `plateau_patience` evaluations without a
    /// new best validation loss.
    pub lr_decay: f32,
    pub plateau_patience: usize,
    /// Evaluations without improvement before stopping.
    pub early_stop_patience: usize,
    pub min_lr: f32,
    pub max_epochs: usize,
    pub max_steps: Option<u64>,
    /// Evaluate every this many steps; once per epoch when unset.
    pub eval_every: Option<u64>,
    /// Stop as soon as validation token accuracy exceeds this.
    pub stop_at_accuracy: Option<f64>,
    /// Examples per gradient chunk. Chunks are reduced in order, so results
    /// do not depend on `jobs`.
    pub chunk_size: usize,
    pub jobs: usize,
    /// Batches sorted together by target length before shuffling.
    pub bucket_batches: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 16,
            learning_rate: 1e-3,
            lr_decay: 0.5,
            plateau_patience: 2,
            early_stop_patience: 5,
            min_lr: 1e-5,
            max_epochs: 100,
            max_steps: None,
            eval_every: None,
            stop_at_accuracy: None,
            chunk_size: 8,
            jobs: 1,
            bucket_batches: 8,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: u64,
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub lr: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub curve: Vec<CurvePoint>,
    pub best_step: u64,
    pub best_val_loss: f64,
    pub best_val_accuracy: f64,
    pub steps: u64,
    pub final_lr: f32,
    pub stopped_early: bool,
}

impl TrainReport {
    /// Columns step, train_loss, val_loss, lr.
    pub fn curve_csv(&self) -> String {
        let mut s = String::from("step,train_loss,val_loss,lr\n");
        for p in &self.curve {
            s.push_str(&format!("{},{:.6},{:.6},{}\n", p.step, p.train_loss, p.val_loss, p.lr));
        }
        s
    }
}

fn target_tokens(e: &Example) -> usize {
    e.target.iter().skip(1).filter(|&&y| y != TokenVocab::PAD).count()
}

/// Gradients of the token-mean loss over `batch`, reduced chunk by chunk
/// in a fixed order.
pub fn batch_gradients(
    model: &Model,
    batch: &[&Example],
    chunk_size: usize,
    pool: Option<&rayon::ThreadPool>,
    dropout_seed: u64,
) -> Result<(Grads, LossStats), ModelError> {
    let total: usize = batch.iter().map(|e| target_tokens(e)).sum();
    let chunks: Vec<(usize, &[&Example])> = batch.chunks(chunk_size.max(1)).enumerate().collect();
    let run = |&(i, chunk): &(usize, &[&Example])| -> Result<(Grads, LossStats), ModelError> {
        let mut rng = Rng::derive(dropout_seed, &format!("dropout{i}"));
        let mut tape = Tape::new();
        let b = model.params.bind(&mut tape);
        let (loss, stats) = model.batch_loss(&mut tape, &b, chunk, Some(&mut rng))?;
        tape.backward(loss)?;
        Ok((model.params.grads(&b, &tape), stats))
    };
    let results: Vec<Result<(Grads, LossStats), ModelError>> = match pool {
        Some(p) => p.install(|| chunks.par_iter().map(run).collect()),
        None => chunks.iter().map(run).collect(),
    };
    let mut grads = Grads::default();
    let mut stats = LossStats::default();
    for r in results {
        let (g, s) = r?;
        if total > 0 {
            grads.add_scaled(&g, s.tokens as f32 / total as f32);
        }
        stats.merge(&s);
    }
    Ok((grads, stats))
}

/// Loss statistics over `examples` in fixed batches, without dropout.
pub fn evaluate(model: &Model, examples: &[Example], batch_size: usize) -> Result<LossStats, ModelError> {
    let mut stats = LossStats::default();
    let refs: Vec<&Example> = examples.iter().collect();
    for batch in refs.chunks(batch_size.max(1)) {
        stats.merge(&model.evaluate(batch)?);
    }
    Ok(stats)
}

/// Batches for one epoch: shuffle, sort groups of `bucket_batches` batches
/// by target length, split, shuffle the batch order.
fn epoch_batches(n: usize, lens: &[usize], cfg: &TrainConfig, rng: &mut Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let group = cfg.batch_size * cfg.bucket_batches.max(1);
    let mut batches = Vec::new();
    for g in order.chunks(group) {
        let mut g = g.to_vec();
        g.sort_by_key(|&i| (lens[i], i));
        batches.extend(g.chunks(cfg.batch_size).map(|c| c.to_vec()));
    }
    rng.shuffle(&mut batches);
    batches
}

/// Trains `model` in place and leaves it at the best validation loss.
/// With no validation examples the training set stands in.
pub fn train(model: &mut Model, train: &[Example], validation: &[Example], cfg: &TrainConfig) -> Result<TrainReport, ModelError> {
    if train.is_empty() {
        return Err(ModelError::Input("no training examples".into()));
    }
    if cfg.batch_size == 0 {
        return Err(ModelError::Config("batch_size must be positive".into()));
    }
    let val = if validation.is_empty() { train } else { validation };
    let pool = if cfg.jobs > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(cfg.jobs)
                .build()
                .map_err(|e| ModelError::Config(format!("thread pool: {e}")))?,
        )
    } else {
        None
    };
    let lens: Vec<usize> = train.iter().map(|e| e.target.len()).collect();
    let mut rng = Rng::derive(cfg.seed, "batches");
    let mut lr = cfg.learning_rate;
    let mut best: Option<(f64, f64, ParamStore)> = None;
    let mut best_step = model.params.step();
    let (mut bad, mut plateau) = (0usize, 0usize);
    let mut curve = Vec::new();
    let mut window = LossStats::default();
    let mut stopped_early = false;
    let start_step = model.params.step();
    let steps_per_epoch = train.len().div_ceil(cfg.batch_size) as u64;
    let eval_every = cfg.eval_every.unwrap_or(steps_per_epoch).max(1);

    'outer: for epoch in 0..cfg.max_epochs {
        for batch in epoch_batches(train.len(), &lens, cfg, &mut rng) {
            let step = model.params.step();
            if cfg.max_steps.is_some_and(|m| step - start_step >= m) {
                break 'outer;
            }
            let refs: Vec<&Example> = batch.iter().map(|&i| &train[i]).collect();
            let outcome = batch_gradients(model, &refs, cfg.chunk_size, pool.as_ref(), cfg.seed ^ step.wrapping_mul(0x9e37_79b9))
                .and_then(|(g, s)| {
                    if !s.loss_sum.is_finite() {
                        return Err(ModelError::Numeric(NumericError::NonFinite("loss".into())));
                    }
                    model.params.adam_step(&g, lr, &cfg.adam)?;
                    Ok(s)
                });
            match outcome {
                Ok(s) => window.merge(&s),
                Err(ModelError::Numeric(NumericError::NonFinite(_))) => {
                    if let Some((_, _, p)) = best.take() {
                        model.params = p;
                    }
                    return Err(ModelError::Diverged { step });
                }
                Err(e) => return Err(e),
            }
            let done = model.params.step() - start_step;
            if done % eval_every == 0 {
                let v = evaluate(model, val, cfg.batch_size)?;
                let point = CurvePoint {
                    step: model.params.step(),
                    epoch,
                    train_loss: window.mean(),
                    val_loss: v.mean(),
                    val_accuracy: v.accuracy(),
                    lr,
                };
                log::info!(
                    "step {} epoch {} train {:.4} val {:.4} acc {:.3} lr {:.2e}",
                    point.step,
                    epoch,
                    point.train_loss,
                    point.val_loss,
                    point.val_accuracy,
                    lr
                );
                window = LossStats::default();
                curve.push(point);
                if !v.mean().is_finite() {
                    if let Some((_, _, p)) = best.take() {
                        model.params = p;
                    }
                    return Err(ModelError::Diverged { step: model.params.step() });
                }
                if best.as_ref().is_none_or(|b| v.mean() < b.0) {
                    best = Some((v.mean(), v.accuracy(), model.params.clone()));
                    best_step = model.params.step();
                    bad = 0;
                    plateau = 0;
                } else {
                    bad += 1;
                    plateau += 1;
                    if plateau >= cfg.plateau_patience {
                        lr = (lr * cfg.lr_decay).max(cfg.min_lr);
                        plateau = 0;
                    }
                    if bad >= cfg.early_stop_patience {
                        stopped_early = true;
                        break 'outer;
                    }
                }
                if cfg.stop_at_accuracy.is_some_and(|a| v.accuracy() > a) {
                    break 'outer;
                }
            }
        }
    }
    let steps = model.params.step() - start_step;
    let (best_val_loss, best_val_accuracy) = match best {
        Some((l, a, p)) => {
            model.params = p;
            (l, a)
        }
        None => {
            let v = evaluate(model, val, cfg.batch_size)?;
            best_step = model.params.step();
            (v.mean(), v.accuracy())
        }
    };
    Ok(TrainReport { curve, best_step, best_val_loss, best_val_accuracy, steps, final_lr: lr, stopped_early })
}
