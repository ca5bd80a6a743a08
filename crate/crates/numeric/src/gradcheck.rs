//! Central finite-difference check of tape gradients.

use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradReport {
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    /// (input index, element index) of the worst relative error.
    pub worst: (usize, usize),
    pub checked: usize,
}

/// Compares analytic gradients of the scalar built by `f` against central
/// differences with step `eps`, evaluating everything in f64. The relative error of one element is
/// `|a - n| / max(|a|, |n|, floor)`; `floor` keeps near-zero gradients from
/// dividing rounding noise by rounding noise.
pub fn check<F>(inputs: &[Tensor<f64>], eps: f64, floor: f64, f: F) -> Result<GradReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    check_sampled(inputs, eps, floor, None, f)
}

/// As [`check`], visiting at most `per_input` evenly spaced elements of
/// each input.
pub fn check_sampled<F>(inputs: &[Tensor<f64>], eps: f64, floor: f64, per_input: Option<usize>, f: F) -> Result<GradReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::<f64>::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    tape.backward(loss)?;
    let analytic: Vec<Tensor<f64>> = vars.iter().map(|&v| tape.grad(v)).collect();

    let eval = |inputs: &[Tensor<f64>]| -> Result<f64> {
        let mut tape = Tape::<f64>::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        Ok(tape.value(out).data()[0])
    };

    let mut report = GradReport { max_rel_err: 0.0, max_abs_err: 0.0, worst: (0, 0), checked: 0 };
    let mut work = inputs.to_vec();
    for (i, input) in inputs.iter().enumerate() {
        let n = input.len();
        let stride = per_input.map_or(1, |k| n.div_ceil(k.max(1)).max(1));
        for j in (0..n).step_by(stride) {
            let x = input.data()[j];
            work[i].data_mut()[j] = x + eps;
            let plus = eval(&work)?;
            work[i].data_mut()[j] = x - eps;
            let minus = eval(&work)?;
            work[i].data_mut()[j] = x;
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic[i].data()[j];
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(floor);
            report.checked += 1;
            report.max_abs_err = report.max_abs_err.max(abs);
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst = (i, j);
            }
        }
    }
    Ok(report)
}
