//! Finite-difference checks of the composed cells and the full
//! teacher-forced loss, in f64 at toy sizes.

mod common;

use common::*;
use std::collections::BTreeMap;
use stylox_model::layers::{Attention, Gru};
use stylox_model::{Example, Model, Variant};
use stylox_numeric::adam::Bound;
use stylox_numeric::gradcheck::{check, check_sampled, GradReport};
use stylox_numeric::{Rng, Tape, Tensor, Var};

const EPS: f64 = 1e-3;
const MAX_REL: f64 = 1e-3;
const FLOOR: f64 = 1e-6;

fn rand(rng: &mut Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| 0.8 * rng.normal()).collect()).unwrap()
}

fn assert_ok(name: &str, r: GradReport) {
    println!("{name}: max rel err {:.2e} over {} elements", r.max_rel_err, r.checked);
    assert!(r.max_rel_err < MAX_REL, "{name}: {r:?}");
}

fn weighted(tape: &mut Tape<f64>, out: Var, seed: u64) -> stylox_numeric::Result<Var> {
    let shape = tape.shape(out).to_vec();
    let w = tape.constant(rand(&mut Rng::new(seed), &shape));
    let p = tape.mul(out, w)?;
    Ok(tape.sum_all(p))
}

#[test]
fn gru_cell_unrolled() {
    let mut rng = Rng::new(1);
    let (b, d, h) = (2, 3, 4);
    let inputs = vec![
        rand(&mut rng, &[d, 3 * h]),
        rand(&mut rng, &[h, 3 * h]),
        rand(&mut rng, &[3 * h]),
        rand(&mut rng, &[3 * h]),
        rand(&mut rng, &[3 * b, d]),
        rand(&mut rng, &[b, h]),
    ];
    let r = check(&inputs, EPS, FLOOR, |t, v| {
        let gru = Gru { wx: v[0], wh: v[1], bx: v[2], bh: v[3], hidden: h };
        let xg = gru.project(t, v[4])?;
        let mut s = v[5];
        for step in 0..3 {
            let rows: Vec<usize> = (step * b..(step + 1) * b).collect();
            let x = t.gather_rows(xg, &rows)?;
            s = gru.step(t, x, s)?;
        }
        weighted(t, s, 2)
    })
    .unwrap();
    assert_ok("gru x3", r);
}

#[test]
fn attention_cell() {
    let mut rng = Rng::new(3);
    let (b, steps, dh, ds, da) = (2, 3, 4, 3, 2);
    let inputs = vec![
        rand(&mut rng, &[ds, da]),
        rand(&mut rng, &[dh, da]),
        rand(&mut rng, &[da]),
        rand(&mut rng, &[da, 1]),
        rand(&mut rng, &[b * steps, dh]),
        rand(&mut rng, &[b, ds]),
    ];
    let r = check(&inputs, EPS, FLOOR, |t, v| {
        let att = Attention { wa: v[0], ua: v[1], ba: v[2], v: v[3] };
        let mem = att.memory(t, v[4], b, steps, &[3, 2])?;
        let (_, ctx) = att.attend(t, &mem, v[5])?;
        weighted(t, ctx, 4)
    })
    .unwrap();
    assert_ok("attention", r);
}

fn end_to_end(variant: Variant, per_input: Option<usize>) -> GradReport {
    let model: Model<f64> = toy_model(variant, 2, 21);
    let exs = examples(variant, 2, 2, 3, 22);
    let refs: Vec<&Example> = exs.iter().collect();
    let names: Vec<String> = model.params.names().map(String::from).collect();
    let inputs: Vec<Tensor<f64>> = names.iter().map(|n| model.params.get(n).unwrap().clone()).collect();
    check_sampled(&inputs, EPS, FLOOR, per_input, |t, v| {
        let bound = Bound::new(names.iter().cloned().zip(v.iter().copied()).collect::<BTreeMap<_, _>>());
        let (loss, _) = model.batch_loss(t, &bound, &refs, None).map_err(|e| match e {
            stylox_model::ModelError::Numeric(n) => n,
            other => panic!("{other}"),
        })?;
        Ok(loss)
    })
    .unwrap()
}

#[test]
fn teacher_forced_loss_roll2seq() {
    // The first conv layer alone has 4 * 128 * 3 weights; every tensor is
    // sampled at up to 60 evenly spaced elements.
    assert_ok("roll2seq end to end", end_to_end(Variant::Roll2Seq, Some(60)));
}

#[test]
fn teacher_forced_loss_seq2seq() {
    assert_ok("seq2seq end to end", end_to_end(Variant::Seq2Seq, Some(60)));
}
