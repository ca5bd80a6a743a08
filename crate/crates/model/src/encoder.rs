//! Encoder front ends, registered by name and selected from the config.

use crate::config::{ModelConfig, ROLL_COLUMNS};
use crate::layers::{bigru, gru_shapes, BiStates, Gru};
use crate::ModelError;
use std::collections::BTreeMap;
use stylox_core::codec::{PianoRoll, TokenVocab, ROLL_PITCHES};
use stylox_numeric::adam::Bound;
use stylox_numeric::tensor::Scalar;
use stylox_numeric::{Tape, Tensor, Var};

/// One encoder input: a piano roll for roll2seq, token ids for seq2seq.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelInput {
    Roll(PianoRoll),
    Tokens(Vec<u32>),
}

/// Per-position feature rows fed to the bidirectional GRU.
#[derive(Debug, Clone)]
pub struct Features {
    /// [batch * steps, dim], batch-major.
    pub x: Var,
    pub batch: usize,
    pub steps: usize,
    pub valid: Vec<usize>,
}

pub trait Encoder<T: Scalar>: Send + Sync {
    fn name(&self) -> &'static str;
    /// Width of each feature row.
    fn feature_dim(&self, cfg: &ModelConfig) -> usize;
    /// Front-end parameters (the shared GRU is added by the model).
    fn param_shapes(&self, cfg: &ModelConfig) -> Vec<(String, Vec<usize>)>;
    fn features(
        &self,
        tape: &mut Tape<T>,
        params: &Bound,
        cfg: &ModelConfig,
        inputs: &[&ModelInput],
    ) -> Result<Features, ModelError>;
}

/// Piano roll with pitches as input channels, two strided convolutions
/// over time.
pub struct Roll2Seq;

/// Token embedding.
pub struct Seq2Seq;

impl<T: Scalar> Encoder<T> for Roll2Seq {
    fn name(&self) -> &'static str {
        "roll2seq"
    }

    fn feature_dim(&self, cfg: &ModelConfig) -> usize {
        cfg.conv_channels.1
    }

    fn param_shapes(&self, cfg: &ModelConfig) -> Vec<(String, Vec<usize>)> {
        let (c1, c2) = cfg.conv_channels;
        let (k1, k2) = cfg.conv_kernels;
        vec![
            ("conv1.w".into(), vec![k1 * ROLL_PITCHES, c1]),
            ("conv1.b".into(), vec![c1]),
            ("conv2.w".into(), vec![k2 * c1, c2]),
            ("conv2.b".into(), vec![c2]),
        ]
    }

    fn features(
        &self,
        tape: &mut Tape<T>,
        params: &Bound,
        cfg: &ModelConfig,
        inputs: &[&ModelInput],
    ) -> Result<Features, ModelError> {
        let batch = inputs.len();
        let mut data = Vec::with_capacity(batch * ROLL_COLUMNS * ROLL_PITCHES);
        for input in inputs {
            let ModelInput::Roll(roll) = input else {
                return Err(ModelError::Input("roll2seq expects piano-roll input".into()));
            };
            if roll.columns() != ROLL_COLUMNS || roll.pitches() != ROLL_PITCHES {
                return Err(ModelError::Input(format!(
                    "piano roll is {}x{}, expected {ROLL_PITCHES}x{ROLL_COLUMNS}",
                    roll.pitches(),
                    roll.columns()
                )));
            }
            data.extend(roll.to_time_major().into_iter().map(|v| T::lit(v as f64)));
        }
        let x = tape.constant(Tensor::new(&[batch * ROLL_COLUMNS, ROLL_PITCHES], data)?);
        let h = tape.conv1d(x, params.get("conv1.w")?, params.get("conv1.b")?, batch, cfg.conv_strides.0)?;
        let h = tape.relu(h);
        let h = tape.conv1d(h, params.get("conv2.w")?, params.get("conv2.b")?, batch, cfg.conv_strides.1)?;
        let h = tape.relu(h);
        let steps = cfg.encoder_positions().expect("roll2seq");
        Ok(Features { x: h, batch, steps, valid: vec![steps; batch] })
    }
}

impl<T: Scalar> Encoder<T> for Seq2Seq {
    fn name(&self) -> &'static str {
        "seq2seq"
    }

    fn feature_dim(&self, cfg: &ModelConfig) -> usize {
        cfg.token_embed_dim
    }

    fn param_shapes(&self, cfg: &ModelConfig) -> Vec<(String, Vec<usize>)> {
        vec![("enc.embed".into(), vec![TokenVocab::SIZE, cfg.token_embed_dim])]
    }

    fn features(
        &self,
        tape: &mut Tape<T>,
        params: &Bound,
        _cfg: &ModelConfig,
        inputs: &[&ModelInput],
    ) -> Result<Features, ModelError> {
        let mut seqs = Vec::with_capacity(inputs.len());
        for input in inputs {
            let ModelInput::Tokens(ids) = input else {
                return Err(ModelError::Input("seq2seq expects token input".into()));
            };
            if ids.is_empty() {
                return Err(ModelError::Input("empty token sequence".into()));
            }
            if let Some(&bad) = ids.iter().find(|&&id| id as usize >= TokenVocab::SIZE) {
                return Err(ModelError::Input(format!("token id {bad} outside vocabulary of {}", TokenVocab::SIZE)));
            }
            seqs.push(ids);
        }
        let steps = seqs.iter().map(|s| s.len()).max().unwrap_or(0);
        let mut ids = Vec::with_capacity(seqs.len() * steps);
        for s in &seqs {
            ids.extend(s.iter().map(|&i| i as usize));
            ids.extend(std::iter::repeat_n(TokenVocab::PAD as usize, steps - s.len()));
        }
        let x = tape.gather_rows(params.get("enc.embed")?, &ids)?;
        Ok(Features { x, batch: seqs.len(), steps, valid: seqs.iter().map(|s| s.len()).collect() })
    }
}

/// Encoders by name.
pub struct EncoderRegistry<T: Scalar> {
    encoders: BTreeMap<&'static str, Box<dyn Encoder<T>>>,
}

impl<T: Scalar> EncoderRegistry<T> {
    pub fn empty() -> Self {
        EncoderRegistry { encoders: BTreeMap::new() }
    }

    pub fn builtin() -> Self {
        let mut r = EncoderRegistry::empty();
        r.register(Box::new(Roll2Seq));
        r.register(Box::new(Seq2Seq));
        r
    }

    pub fn register(&mut self, encoder: Box<dyn Encoder<T>>) {
        self.encoders.insert(encoder.name(), encoder);
    }

    pub fn get(&self, name: &str) -> Result<&dyn Encoder<T>, ModelError> {
        self.encoders.get(name).map(|b| b.as_ref()).ok_or_else(|| {
            ModelError::Config(format!("unknown encoder '{name}' (available: {})", self.names().join(", ")))
        })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.encoders.keys().copied().collect()
    }
}

/// Encoder states for a batch.
#[derive(Debug, Clone)]
pub struct Encoded {
    pub bi: BiStates,
    pub batch: usize,
    pub steps: usize,
    pub valid: Vec<usize>,
}

pub fn encoder_param_shapes<T: Scalar>(enc: &dyn Encoder<T>, cfg: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let mut shapes = enc.param_shapes(cfg);
    let d = enc.feature_dim(cfg);
    shapes.extend(gru_shapes("enc.fw", d, cfg.encoder_hidden));
    shapes.extend(gru_shapes("enc.bw", d, cfg.encoder_hidden));
    shapes
}

pub fn encode<T: Scalar>(
    enc: &dyn Encoder<T>,
    tape: &mut Tape<T>,
    params: &Bound,
    cfg: &ModelConfig,
    inputs: &[&ModelInput],
) -> Result<Encoded, ModelError> {
    let f = enc.features(tape, params, cfg, inputs)?;
    let fw = Gru::bind(params, "enc.fw", cfg.encoder_hidden)?;
    let bw = Gru::bind(params, "enc.bw", cfg.encoder_hidden)?;
    let bi = bigru(tape, &fw, &bw, f.x, f.batch, f.steps, &f.valid)?;
    Ok(Encoded { bi, batch: f.batch, steps: f.steps, valid: f.valid })
}
