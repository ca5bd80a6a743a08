use crate::ModelError;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use stylox_core::codec::{ROLL_COLUMNS_PER_BEAT, ROLL_PITCHES, SEGMENT_BEATS};

/// Encoder front end. Names match the encoder registry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Roll2Seq,
    Seq2Seq,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Roll2Seq => "roll2seq",
            Variant::Seq2Seq => "seq2seq",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "roll2seq" => Ok(Variant::Roll2Seq),
            "seq2seq" => Ok(Variant::Seq2Seq),
            _ => Err(ModelError::Config(format!("unknown variant '{s}' (expected roll2seq or seq2seq)"))),
        }
    }
}

/// Missing fields in JSON take the desk defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Per direction; encoder states are twice this wide.
    pub encoder_hidden: usize,
    pub decoder_hidden: usize,
    pub conv_channels: (usize, usize),
    pub conv_kernels: (usize, usize),
    pub conv_strides: (usize, usize),
    pub attention_dim: usize,
    pub style_embed_dim: usize,
    pub token_embed_dim: usize,
    pub num_styles: usize,
    /// False trains a single-pair model with no style table.
    pub style_conditioning: bool,
    pub max_decode_len: usize,
    pub dropout: f32,
}

/// Piano-roll columns in one segment.
pub const ROLL_COLUMNS: usize = SEGMENT_BEATS as usize * ROLL_COLUMNS_PER_BEAT;

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::desk(Variant::Roll2Seq, 0)
    }
}

impl ModelConfig {
    /// Desk-scale defaults.
    pub fn desk(variant: Variant, num_styles: usize) -> ModelConfig {
        ModelConfig {
            variant,
            encoder_hidden: 128,
            decoder_hidden: 256,
            conv_channels: (256, 512),
            conv_kernels: (4, 4),
            conv_strides: (2, 4),
            attention_dim: 128,
            style_embed_dim: 32,
            token_embed_dim: 64,
            num_styles,
            style_conditioning: true,
            max_decode_len: 600,
            dropout: 0.1,
        }
    }

    /// Large reference sizes: the CNN emits 1280-wide
    /// vectors, two per bar. Recorded for comparison, not used by default.
    pub fn full_scale(num_styles: usize) -> ModelConfig {
        ModelConfig {
            conv_channels: (640, 1280),
            encoder_hidden: 512,
            decoder_hidden: 512,
            attention_dim: 256,
            style_embed_dim: 64,
            token_embed_dim: 128,
            ..ModelConfig::desk(Variant::Roll2Seq, num_styles)
        }
    }

    /// Tiny dimensions for gradient checks and unit tests.
    pub fn toy(variant: Variant, num_styles: usize) -> ModelConfig {
        ModelConfig {
            variant,
            encoder_hidden: 3,
            decoder_hidden: 4,
            conv_channels: (3, 4),
            attention_dim: 3,
            style_embed_dim: 2,
            token_embed_dim: 3,
            max_decode_len: 40,
            dropout: 0.0,
            ..ModelConfig::desk(variant, num_styles)
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let dims = [
            ("encoder_hidden", self.encoder_hidden),
            ("decoder_hidden", self.decoder_hidden),
            ("conv_channels.0", self.conv_channels.0),
            ("conv_channels.1", self.conv_channels.1),
            ("conv_kernels.0", self.conv_kernels.0),
            ("conv_kernels.1", self.conv_kernels.1),
            ("conv_strides.0", self.conv_strides.0),
            ("conv_strides.1", self.conv_strides.1),
            ("attention_dim", self.attention_dim),
            ("token_embed_dim", self.token_embed_dim),
            ("max_decode_len", self.max_decode_len),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(ModelError::Config(format!("{name} must be positive")));
            }
        }
        if self.style_conditioning && (self.num_styles == 0 || self.style_embed_dim == 0) {
            return Err(ModelError::Config("style conditioning needs num_styles and style_embed_dim > 0".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        let (s1, s2) = self.conv_strides;
        if self.conv_kernels.0 < s1 || self.conv_kernels.1 < s2 {
            return Err(ModelError::Config("conv kernels must be at least as wide as their strides".into()));
        }
        if !ROLL_COLUMNS.is_multiple_of(s1 * s2) {
            return Err(ModelError::Config(format!("conv strides {s1}x{s2} do not divide {ROLL_COLUMNS} columns")));
        }
        Ok(())
    }

    /// Encoder positions for one segment.
    pub fn encoder_positions(&self) -> Option<usize> {
        match self.variant {
            Variant::Roll2Seq => Some(ROLL_COLUMNS / (self.conv_strides.0 * self.conv_strides.1)),
            Variant::Seq2Seq => None,
        }
    }

    pub fn state_dim(&self) -> usize {
        2 * self.encoder_hidden
    }

    /// Width of the style input to the decoder GRU.
    pub fn style_input_dim(&self) -> usize {
        if self.style_conditioning {
            self.style_embed_dim
        } else {
            0
        }
    }

    pub fn roll_pitches(&self) -> usize {
        ROLL_PITCHES
    }
}
