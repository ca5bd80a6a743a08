#![allow(dead_code)]

use stylox_core::codec::{encode_events, to_piano_roll, tokenize, Segment};
use stylox_core::{Note, NoteList, TimeSignature};
use stylox_model::{Example, Model, ModelConfig, ModelInput, StyleInfo, Variant};
use stylox_numeric::tensor::Scalar;
use stylox_numeric::{Rng, Tensor};

pub fn random_segment(rng: &mut Rng, notes: usize) -> Segment {
    let list = (0..notes).map(|_| {
        let on = rng.below(30 * 4) as f64 / 4.0;
        let len = 0.25 * (1 + rng.below(8)) as f64;
        Note::new(36 + rng.below(40) as u8, on, (on + len).min(32.0))
    });
    Segment::new(NoteList::new(list, TimeSignature::FourFour))
}

pub fn styles(n: usize) -> Vec<StyleInfo> {
    (0..n).map(|i| StyleInfo { name: format!("s{i}"), feel: if i % 2 == 0 { "even" } else { "swing" }.into() }).collect()
}

pub fn input_for(variant: Variant, seg: &Segment) -> ModelInput {
    match variant {
        Variant::Roll2Seq => ModelInput::Roll(to_piano_roll(seg)),
        Variant::Seq2Seq => ModelInput::Tokens(tokenize(&encode_events(seg, false))),
    }
}

pub fn examples(variant: Variant, n: usize, styles: usize, notes: usize, seed: u64) -> Vec<Example> {
    let mut rng = Rng::new(seed);
    (0..n)
        .map(|i| {
            let src = random_segment(&mut rng, notes);
            let dst = random_segment(&mut rng, notes);
            Example { input: input_for(variant, &src), style: i % styles, target: tokenize(&encode_events(&dst, false)) }
        })
        .collect()
}

/// Toy model with every parameter (biases included) drawn at random so no
/// gradient path is trivially zero.
pub fn toy_model<T: Scalar>(variant: Variant, num_styles: usize, seed: u64) -> Model<T> {
    let cfg = ModelConfig::toy(variant, num_styles);
    let mut m = Model::<T>::new(cfg, styles(num_styles), seed).unwrap();
    let mut rng = Rng::new(seed ^ 0xabc);
    let names: Vec<String> = m.params.names().map(String::from).collect();
    for name in names {
        let t = m.params.get_mut(&name).unwrap();
        let shape = t.shape().to_vec();
        let n = t.len();
        *t = Tensor::new(&shape, (0..n).map(|_| T::lit(0.5 * rng.normal())).collect()).unwrap();
    }
    m
}
