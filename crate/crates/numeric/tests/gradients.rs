//! Finite-difference checks for every differentiable op.

use stylox_numeric::gradcheck::{check, GradReport};
use stylox_numeric::{Rng, Tape, Tensor, Var};

const EPS: f64 = 1e-3;
const MAX_REL: f64 = 1e-3;
/// Gradients smaller than this are compared on an absolute scale.
const FLOOR: f64 = 1e-6;

fn rand_tensor(rng: &mut Rng, shape: &[usize], scale: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| scale * (2.0 * rng.uniform() - 1.0)).collect()).unwrap()
}

/// Reduces an op output to a scalar through fixed random weights so every
/// output element contributes a distinct gradient.
fn weighted(tape: &mut Tape<f64>, out: Var, seed: u64) -> stylox_numeric::Result<Var> {
    let shape = tape.shape(out).to_vec();
    let w = rand_tensor(&mut Rng::new(seed), &shape, 1.0);
    let w = tape.constant(w);
    let p = tape.mul(out, w)?;
    Ok(tape.sum_all(p))
}

fn assert_ok(name: &str, r: GradReport) {
    println!("{name}: max rel err {:.2e} over {} elements", r.max_rel_err, r.checked);
    assert!(r.max_rel_err < MAX_REL, "{name}: {r:?}");
}

#[test]
fn elementwise_ops() {
    let mut rng = Rng::new(1);
    let a = rand_tensor(&mut rng, &[3, 4], 1.5);
    let b = rand_tensor(&mut rng, &[3, 4], 1.5);
    let r = check(&[a.clone(), b.clone()], EPS, FLOOR, |t, v| {
        let s = t.add(v[0], v[1])?;
        let d = t.sub(s, v[1])?;
        let m = t.mul(d, v[1])?;
        let o = t.one_minus(m);
        let o = t.scale(o, 0.7);
        weighted(t, o, 9)
    })
    .unwrap();
    assert_ok("add/sub/mul/one_minus/scale", r);
    for (name, which) in [("sigmoid", 0), ("tanh", 1), ("relu", 2)] {
        let r = check(std::slice::from_ref(&a), EPS, FLOOR, |t, v| {
            let o = match which {
                0 => t.sigmoid(v[0]),
                1 => t.tanh(v[0]),
                _ => t.relu(v[0]),
            };
            weighted(t, o, 10)
        })
        .unwrap();
        assert_ok(name, r);
    }
}

#[test]
fn matmul_and_bias() {
    let mut rng = Rng::new(2);
    let a = rand_tensor(&mut rng, &[3, 5], 1.0);
    let b = rand_tensor(&mut rng, &[5, 2], 1.0);
    let bias = rand_tensor(&mut rng, &[2], 1.0);
    let r = check(&[a, b, bias], EPS, FLOOR, |t, v| {
        let m = t.matmul(v[0], v[1])?;
        let o = t.add_row(m, v[2])?;
        weighted(t, o, 11)
    })
    .unwrap();
    assert_ok("matmul/add_row", r);
}

#[test]
fn structural_ops() {
    let mut rng = Rng::new(3);
    let a = rand_tensor(&mut rng, &[4, 3], 1.0);
    let b = rand_tensor(&mut rng, &[4, 2], 1.0);
    let r = check(&[a, b], EPS, FLOOR, |t, v| {
        let c = t.concat_cols(&[v[0], v[1]])?;
        let s = t.slice_cols(c, 1, 3)?;
        let g = t.gather_rows(s, &[3, 0, 0, 2])?;
        let rows = t.concat_rows(&[g, s])?;
        let r = t.reshape(rows, &[6, 4])?;
        weighted(t, r, 12)
    })
    .unwrap();
    assert_ok("concat/slice/gather/reshape", r);
}

#[test]
fn softmax_and_weighted_sum() {
    let mut rng = Rng::new(4);
    let scores = rand_tensor(&mut rng, &[2, 3], 2.0);
    let h = rand_tensor(&mut rng, &[6, 4], 1.0);
    let mask = [true, true, false, true, true, true];
    let r = check(&[scores, h], EPS, FLOOR, |t, v| {
        let a = t.softmax_rows(v[0], Some(&mask))?;
        let c = t.group_weighted_sum(a, v[1])?;
        weighted(t, c, 13)
    })
    .unwrap();
    assert_ok("softmax/group_weighted_sum", r);
}

#[test]
fn conv1d() {
    let mut rng = Rng::new(5);
    for (kernel, stride) in [(4, 2), (4, 4), (3, 1)] {
        let x = rand_tensor(&mut rng, &[2 * 8, 3], 1.0);
        let w = rand_tensor(&mut rng, &[kernel * 3, 2], 0.5);
        let b = rand_tensor(&mut rng, &[2], 0.5);
        let r = check(&[x, w, b], EPS, FLOOR, |t, v| {
            let o = t.conv1d(v[0], v[1], v[2], 2, stride)?;
            weighted(t, o, 14)
        })
        .unwrap();
        assert_ok(&format!("conv1d k{kernel} s{stride}"), r);
    }
}

#[test]
fn cross_entropy() {
    let mut rng = Rng::new(6);
    let logits = rand_tensor(&mut rng, &[5, 7], 2.0);
    let r = check(&[logits], EPS, FLOOR, |t, v| t.cross_entropy(v[0], &[0, 6, 3, 3, 1], &[true, true, false, true, true]))
        .unwrap();
    assert_ok("cross_entropy", r);
}

#[test]
fn conv1d_matches_direct_sum() {
    // Independent loop-form oracle for the im2col implementation.
    let mut rng = Rng::new(7);
    let (batch, t_in, c, out, k, s) = (2, 8, 3, 2, 4, 2);
    let x = rand_tensor(&mut rng, &[batch * t_in, c], 1.0);
    let w = rand_tensor(&mut rng, &[k * c, out], 1.0);
    let b = rand_tensor(&mut rng, &[out], 1.0);
    let mut tape = Tape::<f64>::new();
    let (xv, wv, bv) = (tape.leaf(x.clone()), tape.leaf(w.clone()), tape.leaf(b.clone()));
    let y = tape.conv1d(xv, wv, bv, batch, s).unwrap();
    let y = tape.value(y);
    let pad = (k - s) as isize / 2;
    for bi in 0..batch {
        for to in 0..t_in / s {
            for o in 0..out {
                let mut acc = b.data()[o];
                for kk in 0..k {
                    let ti = (to * s + kk) as isize - pad;
                    if ti < 0 || ti >= t_in as isize {
                        continue;
                    }
                    for ci in 0..c {
                        acc += x.data()[(bi * t_in + ti as usize) * c + ci] 
                            * w.data()[(kk * c + ci) * out + o];
                    }
                }
                let got = y.data()[(bi * (t_in / s) + to) * out + o];
                assert!((got - acc).abs() < 1e-12, "{got} vs {acc}");
            }
        }
    }
}
