use crate::config::ModelConfig;
use crate::encoder::{encode, encoder_param_shapes, Encoded, EncoderRegistry, ModelInput};
use crate::layers::{attention_shapes, dropout, gru_shapes, Attention, Gru, Memory};
use crate::ModelError;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use stylox_core::codec::{decode_events, detokenize, Decoded, EventSeq, TokenVocab};
use stylox_numeric::adam::Bound;
use stylox_numeric::tensor::Scalar;
use stylox_numeric::{Checkpoint, ParamStore, Rng, Tape, Tensor, Var};

/// A target style known to the model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StyleInfo {
    pub name: String,
    pub feel: String,
}

/// One teacher-forcing example. `target` holds BOS ... EOS token ids and
/// may carry trailing PAD.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub input: ModelInput,
    pub style: usize,
    pub target: Vec<u32>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossStats {
    /// Sum of token negative log-likelihoods.
    pub loss_sum: f64,
    pub tokens: usize,
    pub correct: usize,
}

impl LossStats {
    pub fn mean(&self) -> f64 {
        if self.tokens == 0 {
            0.0
        } else {
            self.loss_sum / self.tokens as f64
        }
    }

    pub fn accuracy(&self) -> f64 {
        if self.tokens == 0 {
            0.0
        } else {
            self.correct as f64 / self.tokens as f64
        }
    }

    pub fn merge(&mut self, other: &LossStats) {
        self.loss_sum += other.loss_sum;
        self.tokens += other.tokens;
        self.correct += other.correct;
    }
}

#[derive(Debug, Clone)]
pub struct Model<T: Scalar = f32> {
    pub config: ModelConfig,
    pub params: ParamStore<T>,
    pub styles: Vec<StyleInfo>,
}

/// Decoder parameters bound on a tape.
#[derive(Debug, Clone, Copy)]
pub struct DecoderParams {
    pub style: Option<Var>,
    pub embed: Var,
    pub gru: Gru,
    pub init_w: Var,
    pub init_b: Var,
    pub att: Attention,
    pub out_w: Var,
    pub out_b: Var,
}

/// Greedy decoding unless `temperature` is set, in which case tokens are
/// sampled from the tempered softmax with `seed`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DecodeOptions {
    pub max_len: Option<usize>,
    pub temperature: Option<f32>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Translation {
    /// BOS, generated tokens, and EOS when one was produced.
    pub tokens: Vec<u32>,
    pub decoded: Decoded,
    /// False when the length cap stopped decoding before EOS.
    pub terminated: bool,
}

impl Translation {
    pub fn events(&self) -> EventSeq {
        detokenize(&self.tokens).expect("decoder emits vocabulary ids")
    }
}

fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

impl<T: Scalar> Model<T> {
    /// Fresh model with seeded initialization.
    pub fn new(config: ModelConfig, styles: Vec<StyleInfo>, seed: u64) -> Result<Model<T>, ModelError> {
        config.validate()?;
        if config.style_conditioning && styles.len() != config.num_styles {
            return Err(ModelError::Config(format!(
                "config has {} styles but {} were given",
                config.num_styles,
                styles.len()
            )));
        }
        let mut rng = Rng::derive(seed, "init");
        let mut params = ParamStore::new();
        let shapes: BTreeMap<String, Vec<usize>> = Self::param_shapes(&config)?.into_iter().collect();
        for (name, shape) in shapes {
            let n: usize = shape.iter().product();
            let data: Vec<T> = if shape.len() == 1 {
                vec![T::zero(); n]
            } else if name.ends_with("embed") || name.ends_with("style") {
                (0..n).map(|_| T::lit(0.1 * rng.normal())).collect()
            } else {
                let a = (6.0 / (shape[0] + shape[1]) as f64).sqrt();
                (0..n).map(|_| T::lit(a * (2.0 * rng.uniform() - 1.0))).collect()
            };
            params.insert(&name, Tensor::new(&shape, data)?);
        }
        Ok(Model { config, params, styles })
    }

    pub fn param_shapes(cfg: &ModelConfig) -> Result<Vec<(String, Vec<usize>)>, ModelError> {
        let reg = EncoderRegistry::<T>::builtin();
        let enc = reg.get(cfg.variant.name())?;
        let mut shapes = encoder_param_shapes(enc, cfg);
        let v = TokenVocab::SIZE;
        let state = cfg.state_dim();
        if cfg.style_conditioning {
            shapes.push(("dec.style".into(), vec![cfg.num_styles, cfg.style_embed_dim]));
        }
        shapes.push(("dec.embed".into(), vec![v, cfg.token_embed_dim]));
        let input = state + cfg.style_input_dim() + cfg.token_embed_dim;
        shapes.extend(gru_shapes("dec.gru", input, cfg.decoder_hidden));
        shapes.push(("dec.init.w".into(), vec![state, cfg.decoder_hidden]));
        shapes.push(("dec.init.b".into(), vec![cfg.decoder_hidden]));
        shapes.extend(attention_shapes(cfg.decoder_hidden, state, cfg.attention_dim));
        shapes.push(("out.w".into(), vec![cfg.decoder_hidden, v]));
        shapes.push(("out.b".into(), vec![v]));
        Ok(shapes)
    }

    pub fn style_index(&self, name: &str) -> Result<usize, ModelError> {
        self.styles.iter().position(|s| s.name == name).ok_or_else(|| ModelError::UnknownStyle {
            name: name.to_string(),
            available: self.styles.iter().map(|s| s.name.clone()).collect(),
        })
    }

    pub fn decoder_params(&self, b: &Bound) -> Result<DecoderParams, ModelError> {
        Ok(DecoderParams {
            style: if self.config.style_conditioning { Some(b.get("dec.style")?) } else { None },
            embed: b.get("dec.embed")?,
            gru: Gru::bind(b, "dec.gru", self.config.decoder_hidden)?,
            init_w: b.get("dec.init.w")?,
            init_b: b.get("dec.init.b")?,
            att: Attention::bind(b)?,
            out_w: b.get("out.w")?,
            out_b: b.get("out.b")?,
        })
    }

    pub fn encode(&self, tape: &mut Tape<T>, b: &Bound, inputs: &[&ModelInput]) -> Result<Encoded, ModelError> {
        let reg = EncoderRegistry::<T>::builtin();
        encode(reg.get(self.config.variant.name())?, tape, b, &self.config, inputs)
    }

    fn check_styles(&self, styles: &[usize]) -> Result<(), ModelError> {
        if !self.config.style_conditioning {
            return Ok(());
        }
        match styles.iter().find(|&&s| s >= self.config.num_styles) {
            Some(&s) => Err(ModelError::Input(format!("style id {s} >= num_styles {}", self.config.num_styles))),
            None => Ok(()),
        }
    }

    /// Attention memory and initial decoder state s0 = tanh(Wi [h_fw_last, h_bw_first] + bi).
    pub fn start(
        &self,
        tape: &mut Tape<T>,
        d: &DecoderParams,
        enc: &Encoded,
        rng: Option<&mut Rng>,
    ) -> Result<(Memory, Var), ModelError> {
        let states = dropout(tape, enc.bi.states, self.config.dropout, rng)?;
        let mem = d.att.memory(tape, states, enc.batch, enc.steps, &enc.valid)?;
        let last = tape.concat_cols(&[enc.bi.last_fw, enc.bi.first_bw])?;
        let s0 = tape.matmul(last, d.init_w)?;
        let s0 = tape.add_row(s0, d.init_b)?;
        Ok((mem, tape.tanh(s0)))
    }

    /// s_i = GRU([c_i, W^s z, W^e y_{i-1}], s_{i-1}); logits = Wo s_i + bo.
    /// Returns (s_i, logits [B, vocab], α).
    pub fn decode_step(
        &self,
        tape: &mut Tape<T>,
        d: &DecoderParams,
        mem: &Memory,
        styles: &[usize],
        y_prev: &[u32],
        s_prev: Var,
    ) -> Result<(Var, Var, Var), ModelError> {
        self.check_styles(styles)?;
        let (alpha, ctx) = d.att.attend(tape, mem, s_prev)?;
        let ids: Vec<usize> = y_prev.iter().map(|&y| y as usize).collect();
        let emb = tape.gather_rows(d.embed, &ids)?;
        let x = match d.style {
            Some(table) => {
                let st = tape.gather_rows(table, styles)?;
                tape.concat_cols(&[ctx, st, emb])?
            }
            None => tape.concat_cols(&[ctx, emb])?,
        };
        let xg = d.gru.project(tape, x)?;
        let s = d.gru.step(tape, xg, s_prev)?;
        let logits = tape.matmul(s, d.out_w)?;
        let logits = tape.add_row(logits, d.out_b)?;
        Ok((s, logits, alpha))
    }

    /// Mean teacher-forced cross-entropy over the batch's non-PAD target
    /// tokens. Rows are laid out step-major (row t*B + b predicts
    /// `target[b][t + 1]`).
    pub fn batch_loss(
        &self,
        tape: &mut Tape<T>,
        b: &Bound,
        examples: &[&Example],
        mut rng: Option<&mut Rng>,
    ) -> Result<(Var, LossStats), ModelError> {
        let styles: Vec<usize> = examples.iter().map(|e| e.style).collect();
        self.check_styles(&styles)?;
        for e in examples {
            if e.target.len() < 2 {
                return Err(ModelError::Input("target needs at least BOS and one token".into()));
            }
            if let Some(&bad) = e.target.iter().find(|&&id| id as usize >= TokenVocab::SIZE) {
                return Err(ModelError::Input(format!("target id {bad} outside vocabulary")));
            }
        }
        let batch = examples.len();
        let steps = examples.iter().map(|e| e.target.len() - 1).max().unwrap_or(0);
        let pad = TokenVocab::PAD;
        let at = |e: &Example, i: usize| e.target.get(i).copied().unwrap_or(pad);

        let d = self.decoder_params(b)?;
        let inputs: Vec<&ModelInput> = examples.iter().map(|e| &e.input).collect();
        let enc = self.encode(tape, b, &inputs)?;
        let (mem, mut s) = self.start(tape, &d, &enc, rng.as_deref_mut())?;

        let mut prev = Vec::with_capacity(steps * batch);
        let mut targets = Vec::with_capacity(steps * batch);
        let mut mask = Vec::with_capacity(steps * batch);
        for t in 0..steps {
            for e in examples {
                prev.push(at(e, t) as usize);
                let y = at(e, t + 1);
                targets.push(y as usize);
                mask.push(y != pad);
            }
        }
        // Everything but the context enters the GRU input projection
        // independently of the recurrence, so it is computed for all steps
        // at once; the rows of Wx are split to match.
        let state = self.config.state_dim();
        let in_dim = tape.shape(d.gru.wx)[0];
        let wx_ctx = tape.gather_rows(d.gru.wx, &(0..state).collect::<Vec<_>>())?;
        let wx_rest = tape.gather_rows(d.gru.wx, &(state..in_dim).collect::<Vec<_>>())?;
        let emb = tape.gather_rows(d.embed, &prev)?;
        let emb = dropout(tape, emb, self.config.dropout, rng)?;
        let rest = match d.style {
            Some(table) => {
                let idx: Vec<usize> = (0..steps).flat_map(|_| styles.iter().copied()).collect();
                let st = tape.gather_rows(table, &idx)?;
                tape.concat_cols(&[st, emb])?
            }
            None => emb,
        };
        let rest = tape.matmul(rest, wx_rest)?;
        let rest = tape.add_row(rest, d.gru.bx)?;

        let mut outs = Vec::with_capacity(steps);
        for t in 0..steps {
            let (_, ctx) = d.att.attend(tape, &mem, s)?;
            let xr = tape.gather_rows(rest, &(t * batch..(t + 1) * batch).collect::<Vec<_>>())?;
            let xc = tape.matmul(ctx, wx_ctx)?;
            let xg = tape.add(xr, xc)?;
            s = d.gru.step(tape, xg, s)?;
            outs.push(s);
        }
        let all = tape.concat_rows(&outs)?;
        let logits = tape.matmul(all, d.out_w)?;
        let logits = tape.add_row(logits, d.out_b)?;
        let loss = tape.cross_entropy(logits, &targets, &mask)?;

        let lv = tape.value(logits);
        let tokens = mask.iter().filter(|&&m| m).count();
        let correct = (0..targets.len()).filter(|&r| mask[r] && argmax(lv.row(r)) == targets[r]).count();
        let mean = tape.value(loss).data()[0].as_f64();
        Ok((loss, LossStats { loss_sum: mean * tokens as f64, tokens, correct }))
    }

    /// Loss statistics without gradients.
    pub fn evaluate(&self, examples: &[&Example]) -> Result<LossStats, ModelError> {
        let mut tape = Tape::new();
        let b = self.params.bind_frozen(&mut tape);
        Ok(self.batch_loss(&mut tape, &b, examples, None)?.1)
    }

    /// Decodes every input towards `style` (ignored without conditioning).
    pub fn translate_batch(
        &self,
        inputs: &[&ModelInput],
        style: usize,
        opts: &DecodeOptions,
    ) -> Result<Vec<Translation>, ModelError> {
        if inputs.is_empty() {
            return Ok(Vec::new());
        }
        let styles = vec![style; inputs.len()];
        self.check_styles(&styles)?;
        let max_len = opts.max_len.unwrap_or(self.config.max_decode_len).max(1);
        let mut rng = Rng::derive(opts.seed, "sample");
        let mut tape = Tape::new();
        let b = self.params.bind_frozen(&mut tape);
        let d = self.decoder_params(&b)?;
        let enc = self.encode(&mut tape, &b, inputs)?;
        let (mem, mut s) = self.start(&mut tape, &d, &enc, None)?;
        let mut seqs: Vec<Vec<u32>> = vec![vec![TokenVocab::BOS]; inputs.len()];
        let mut done = vec![false; inputs.len()];
        while seqs[0].len() < max_len && done.iter().any(|d| !d) {
            let prev: Vec<u32> = seqs.iter().map(|q| *q.last().expect("starts with BOS")).collect();
            let (s_next, logits, _) = self.decode_step(&mut tape, &d, &mem, &styles, &prev, s)?;
            s = s_next;
            let lv = tape.value(logits);
            for (i, q) in seqs.iter_mut().enumerate() {
                let row = lv.row(i);
                let y = match opts.temperature {
                    Some(temp) if temp > 0.0 => {
                        let m = row[argmax(row)].as_f64();
                        let w: Vec<f32> =
                            row.iter().map(|&x| ((x.as_f64() - m) / temp as f64).exp() as f32).collect();
                        rng.categorical(&w)
                    }
                    _ => argmax(row),
                } as u32;
                q.push(if done[i] { TokenVocab::PAD } else { y });
                if y == TokenVocab::EOS {
                    done[i] = true;
                }
            }
        }
        Ok(seqs
            .into_iter()
            .map(|mut q| {
                if let Some(end) = q.iter().position(|&y| y == TokenVocab::EOS) {
                    q.truncate(end + 1);
                } else {
                    q.retain(|&y| y != TokenVocab::PAD);
                }
                let terminated = q.last() == Some(&TokenVocab::EOS);
                let decoded = decode_events(&detokenize(&q).expect("vocabulary ids"));
                Translation { tokens: q, decoded, terminated }
            })
            .collect())
    }

    /// Rows of W^s with their style labels.
    pub fn style_embeddings(&self) -> Result<Vec<(StyleInfo, Vec<f64>)>, ModelError> {
        let table = self
            .params
            .get("dec.style")
            .ok_or_else(|| ModelError::Config("model has no style table (trained without conditioning)".into()))?;
        Ok(self.styles.iter().enumerate().map(|(i, s)| (s.clone(), table.row(i).iter().map(|v| v.as_f64()).collect())).collect())
    }

    /// CSV with columns style, feel, e0 ... e{d-1}.
    pub fn style_embeddings_csv(&self) -> Result<String, ModelError> {
        let rows = self.style_embeddings()?;
        let dim = rows.first().map_or(0, |r| r.1.len());
        let mut out = String::from("style,feel");
        for j in 0..dim {
            out.push_str(&format!(",e{j}"));
        }
        out.push('\n');
        for (s, v) in rows {
            out.push_str(&format!("{},{}", s.name, s.feel));
            for x in v {
                out.push_str(&format!(",{x}"));
            }
            out.push('\n');
        }
        Ok(out)
    }
}

#[derive(Serialize, Deserialize)]
struct Meta {
    config: ModelConfig,
    vocab_size: usize,
    vocab_hash: String,
    styles: Vec<StyleInfo>,
    step: u64,
    #[serde(default)]
    extra: serde_json::Value,
}

impl Model<f32> {
    /// Checkpoint with parameters, optionally Adam moments, and `extra`
    /// metadata (for example training state).
    pub fn to_checkpoint(&self, with_optimizer: bool, extra: serde_json::Value) -> Checkpoint {
        let meta = Meta {
            config: self.config.clone(),
            vocab_size: TokenVocab::SIZE,
            vocab_hash: TokenVocab::hash(),
            styles: self.styles.clone(),
            step: self.params.step(),
            extra,
        };
        Checkpoint { meta: serde_json::to_value(meta).expect("meta serializes"), tensors: self.params.export(with_optimizer) }
    }

    /// Restores a model and returns it with the checkpoint's extra metadata.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<(Model<f32>, serde_json::Value), ModelError> {
        let meta: Meta = serde_json::from_value(ck.meta.clone())
            .map_err(|e| ModelError::Checkpoint(format!("bad metadata: {e}")))?;
        if meta.vocab_size != TokenVocab::SIZE || meta.vocab_hash != TokenVocab::hash() {
            return Err(ModelError::Checkpoint(format!(
                "vocabulary mismatch: checkpoint {} ({} ids), this build {} ({} ids)",
                meta.vocab_hash,
                meta.vocab_size,
                TokenVocab::hash(),
                TokenVocab::SIZE
            )));
        }
        meta.config.validate()?;
        let params = ParamStore::import(&ck.tensors, meta.step)?;
        for (name, shape) in Self::param_shapes(&meta.config)? {
            match params.get(&name) {
                Some(t) if t.shape() == shape.as_slice() => {}
                Some(t) => {
                    return Err(ModelError::Checkpoint(format!("'{name}' has shape {:?}, expected {shape:?}", t.shape())))
                }
                None => return Err(ModelError::Checkpoint(format!("missing parameter '{name}'"))),
            }
        }
        Ok((Model { config: meta.config, params, styles: meta.styles }, meta.extra))
    }

    pub fn save(&self, path: &Path, with_optimizer: bool, extra: serde_json::Value) -> Result<(), ModelError> {
        self.to_checkpoint(with_optimizer, extra).save(path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<(Model<f32>, serde_json::Value), ModelError> {
        Model::from_checkpoint(&Checkpoint::load(path)?)
    }

    /// Same model with parameters in another precision.
    pub fn cast<U: Scalar>(&self) -> Model<U> {
        let tensors = self.params.export(false).into_iter().map(|(k, t)| (k, t.cast::<U>())).collect();
        Model {
            config: self.config.clone(),
            params: ParamStore::import(&tensors, self.params.step()).expect("same shapes"),
            styles: self.styles.clone(),
        }
    }
}
