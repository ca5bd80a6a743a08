use stylox_numeric::adam::Grads;
use stylox_numeric::{AdamConfig, ParamStore, Rng, Tape, Tensor};

#[test]
fn softmax_of_zeros_is_uniform() {
    let mut tape: Tape = Tape::new();
    let z = tape.constant(Tensor::zeros(&[1, 4]));
    let s = tape.softmax_rows(z, None).unwrap();
    assert_eq!(tape.value(s).data(), &[0.25; 4]);
}

#[test]
fn identity_matmul() {
    let mut rng = Rng::new(1);
    let x = Tensor::new(&[3, 5], (0..15).map(|_| rng.normal() as f32).collect()).unwrap();
    let mut eye = Tensor::zeros(&[3, 3]);
    for i in 0..3 {
        eye.data_mut()[i * 4] = 1.0;
    }
    let mut tape: Tape = Tape::new();
    let (i, xv) = (tape.constant(eye), tape.constant(x.clone()));
    let y = tape.matmul(i, xv).unwrap();
    assert_eq!(tape.value(y), &x);
}

fn scalar_store(v: f32) -> ParamStore {
    let mut s = ParamStore::new();
    s.insert("w", Tensor::scalar(v));
    s
}

fn grad(v: f32) -> Grads {
    let mut g = Grads::default();
    g.values.insert("w".into(), vec![v]);
    g
}

#[test]
fn adam_zero_gradient_leaves_params() {
    let mut s = scalar_store(0.75);
    for _ in 0..5 {
        s.adam_step(&grad(0.0), 0.1, &AdamConfig::default()).unwrap();
    }
    assert_eq!(s.get("w").unwrap().data(), &[0.75]);
}

#[test]
fn adam_constant_gradient_matches_closed_form() {
    // With g constant both bias-corrected moments equal g and g^2 exactly,
    // so every step is lr * g / (|g| + eps).
    let cfg = AdamConfig { clip_norm: None, ..Default::default() };
    let lr = 0.01f32;
    let mut s = scalar_store(1.0);
    let mut prev = 1.0f32;
    for t in 1..=200 {
        s.adam_step(&grad(1.0), lr, &cfg).unwrap();
        let w = s.get("w").unwrap().data()[0];
        assert!(w < prev, "not monotone at step {t}");
        let step = (prev - w) as f64;
        let expected = lr as f64 / (1.0 + cfg.eps as f64);
        assert!((step - expected).abs() < 1e-5, "step {t}: {step} vs {expected}");
        prev = w;
    }
}

#[test]
fn adam_is_deterministic() {
    let run = || {
        let mut rng = Rng::new(9);
        let mut s = scalar_store(0.3);
        for _ in 0..50 {
            s.adam_step(&grad(rng.normal() as f32), 0.05, &AdamConfig::default()).unwrap();
        }
        s.get("w").unwrap().data()[0].to_bits()
    };
    assert_eq!(run(), run());
}

#[test]
fn categorical_one_hot_returns_index() {
    let mut rng = Rng::new(4);
    for _ in 0..100 {
        assert_eq!(rng.categorical(&[0.0, 0.0, 1.0, 0.0]), 2);
    }
}

#[test]
fn uniform_mean() {
    let mut rng = Rng::new(11);
    let n = 100_000;
    let mean = (0..n).map(|_| rng.uniform()).sum::<f64>() / n as f64;
    assert!((mean - 0.5).abs() < 0.01, "{mean}");
}
