//! Recurrent and attention building blocks over a tape.

use stylox_numeric::adam::Bound;
use stylox_numeric::tensor::Scalar;
use stylox_numeric::{Rng, Tape, Tensor, Var};

pub type NResult<T> = stylox_numeric::Result<T>;

/// GRU weights. Gate blocks are ordered reset, update, candidate:
/// r = σ(x Wr + h Ur), z = σ(x Wz + h Uz), n = tanh(x Wn + r ⊙ (h Un)),
/// h' = (1 - z) ⊙ n + z ⊙ h (biases folded into each projection).
#[derive(Debug, Clone, Copy)]
pub struct Gru {
    pub wx: Var,
    pub wh: Var,
    pub bx: Var,
    pub bh: Var,
    pub hidden: usize,
}

pub fn gru_shapes(prefix: &str, input: usize, hidden: usize) -> Vec<(String, Vec<usize>)> {
    vec![
        (format!("{prefix}.wx"), vec![input, 3 * hidden]),
        (format!("{prefix}.wh"), vec![hidden, 3 * hidden]),
        (format!("{prefix}.bx"), vec![3 * hidden]),
        (format!("{prefix}.bh"), vec![3 * hidden]),
    ]
}

impl Gru {
    pub fn bind(b: &Bound, prefix: &str, hidden: usize) -> NResult<Gru> {
        Ok(Gru {
            wx: b.get(&format!("{prefix}.wx"))?,
            wh: b.get(&format!("{prefix}.wh"))?,
            bx: b.get(&format!("{prefix}.bx"))?,
            bh: b.get(&format!("{prefix}.bh"))?,
            hidden,
        })
    }

    /// Input projection `x Wx + bx` for any number of rows.
    pub fn project<T: Scalar>(&self, tape: &mut Tape<T>, x: Var) -> NResult<Var> {
        let p = tape.matmul(x, self.wx)?;
        tape.add_row(p, self.bx)
    }

    /// One step from a precomputed input projection `xg` of shape [B, 3H].
    pub fn step<T: Scalar>(&self, tape: &mut Tape<T>, xg: Var, h: Var) -> NResult<Var> {
        let hs = self.hidden;
        let hg = tape.matmul(h, self.wh)?;
        let hg = tape.add_row(hg, self.bh)?;
        let xrz = tape.slice_cols(xg, 0, 2 * hs)?;
        let hrz = tape.slice_cols(hg, 0, 2 * hs)?;
        let rz = tape.add(xrz, hrz)?;
        let rz = tape.sigmoid(rz);
        let r = tape.slice_cols(rz, 0, hs)?;
        let z = tape.slice_cols(rz, hs, hs)?;
        let xn = tape.slice_cols(xg, 2 * hs, hs)?;
        let hn = tape.slice_cols(hg, 2 * hs, hs)?;
        let rhn = tape.mul(r, hn)?;
        let n = tape.add(xn, rhn)?;
        let n = tape.tanh(n);
        let keep = tape.one_minus(z);
        let a = tape.mul(keep, n)?;
        let b = tape.mul(z, h)?;
        tape.add(a, b)
    }
}

/// Output of a bidirectional GRU over `batch` sequences of `steps` rows.
#[derive(Debug, Clone)]
pub struct BiStates {
    /// [batch * steps, 2H], batch-major; row b*steps + t is [h_fw_t, h_bw_t].
    pub states: Var,
    /// Forward state after each sequence's last valid position, [batch, H].
    pub last_fw: Var,
    /// Backward state at position 0, [batch, H].
    pub first_bw: Var,
}

/// Runs `fw` and `bw` over `x` ([batch * steps, D], batch-major). `valid`
/// holds each sequence's length; positions past it leave the state
/// unchanged, so the backward pass starts at the true last position.
pub fn bigru<T: Scalar>(
    tape: &mut Tape<T>,
    fw: &Gru,
    bw: &Gru,
    x: Var,
    batch: usize,
    steps: usize,
    valid: &[usize],
) -> NResult<BiStates> {
    let hs = fw.hidden;
    let xf = fw.project(tape, x)?;
    let xb = bw.project(tape, x)?;
    let zero = tape.constant(Tensor::zeros(&[batch, hs]));
    let mut fw_states = Vec::with_capacity(steps);
    let mut bw_states = vec![zero; steps];
    let mut h = zero;
    for t in 0..steps {
        h = masked_step(tape, fw, xf, h, t, batch, steps, valid)?;
        fw_states.push(h);
    }
    let last_fw = h;
    let mut h = zero;
    for t in (0..steps).rev() {
        h = masked_step(tape, bw, xb, h, t, batch, steps, valid)?;
        bw_states[t] = h;
    }
    let first_bw = h;
    // Time-major [steps * batch, 2H], then permuted to batch-major.
    let f = tape.concat_rows(&fw_states)?;
    let b = tape.concat_rows(&bw_states)?;
    let both = tape.concat_cols(&[f, b])?;
    let perm: Vec<usize> = (0..batch).flat_map(|bi| (0..steps).map(move |t| t * batch + bi)).collect();
    let states = tape.gather_rows(both, &perm)?;
    Ok(BiStates { states, last_fw, first_bw })
}

#[allow(clippy::too_many_arguments)]
fn masked_step<T: Scalar>(
    tape: &mut Tape<T>,
    gru: &Gru,
    xg_all: Var,
    h: Var,
    t: usize,
    batch: usize,
    steps: usize,
    valid: &[usize],
) -> NResult<Var> {
    let rows: Vec<usize> = (0..batch).map(|b| b * steps + t).collect();
    let xg = tape.gather_rows(xg_all, &rows)?;
    let cand = gru.step(tape, xg, h)?;
    if valid.iter().all(|&v| t < v) {
        return Ok(cand);
    }
    let hs = gru.hidden;
    let mut m = Tensor::zeros(&[batch, hs]);
    for (b, &v) in valid.iter().enumerate() {
        if t < v {
            m.data_mut()[b * hs..(b + 1) * hs].iter_mut().for_each(|x| *x = T::one());
        }
    }
    let m = tape.constant(m);
    let delta = tape.sub(cand, h)?;
    let delta = tape.mul(delta, m)?;
    tape.add(h, delta)
}

/// Additive attention: e_j = vᵀ tanh(Wa s + Ua h_j + ba), α = softmax(e),
/// c = Σ α_j h_j.
#[derive(Debug, Clone, Copy)]
pub struct Attention {
    pub wa: Var,
    pub ua: Var,
    pub ba: Var,
    pub v: Var,
}

pub fn attention_shapes(decoder: usize, state: usize, dim: usize) -> Vec<(String, Vec<usize>)> {
    vec![
        ("att.wa".into(), vec![decoder, dim]),
        ("att.ua".into(), vec![state, dim]),
        ("att.ba".into(), vec![dim]),
        ("att.v".into(), vec![dim, 1]),
    ]
}

/// Encoder states with their attention keys precomputed.
#[derive(Debug, Clone)]
pub struct Memory {
    pub states: Var,
    pub keys: Var,
    pub batch: usize,
    pub steps: usize,
    /// Per (batch, position): whether the position may be attended.
    pub mask: Vec<bool>,
}

impl Attention {
    pub fn bind(b: &Bound) -> NResult<Attention> {
        Ok(Attention { wa: b.get("att.wa")?, ua: b.get("att.ua")?, ba: b.get("att.ba")?, v: b.get("att.v")? })
    }

    pub fn memory<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        states: Var,
        batch: usize,
        steps: usize,
        valid: &[usize],
    ) -> NResult<Memory> {
        let k = tape.matmul(states, self.ua)?;
        let keys = tape.add_row(k, self.ba)?;
        let mask = (0..batch).flat_map(|b| (0..steps).map(move |t| t < valid[b])).collect();
        Ok(Memory { states, keys, batch, steps, mask })
    }

    /// Returns (α [B, steps], context [B, state]).
    pub fn attend<T: Scalar>(&self, tape: &mut Tape<T>, mem: &Memory, s: Var) -> NResult<(Var, Var)> {
        let q = tape.matmul(s, self.wa)?;
        let expand: Vec<usize> = (0..mem.batch).flat_map(|b| std::iter::repeat_n(b, mem.steps)).collect();
        let q = tape.gather_rows(q, &expand)?;
        let e = tape.add(q, mem.keys)?;
        let e = tape.tanh(e);
        let e = tape.matmul(e, self.v)?;
        let e = tape.reshape(e, &[mem.batch, mem.steps])?;
        let alpha = tape.softmax_rows(e, Some(&mem.mask))?;
        let ctx = tape.group_weighted_sum(alpha, mem.states)?;
        Ok((alpha, ctx))
    }
}

/// Inverted dropout with a constant mask; identity when `rng` is None or
/// `rate` is zero.
pub fn dropout<T: Scalar>(tape: &mut Tape<T>, x: Var, rate: f32, rng: Option<&mut Rng>) -> NResult<Var> {
    let Some(rng) = rng else { return Ok(x) };
    if rate <= 0.0 {
        return Ok(x);
    }
    let shape = tape.shape(x).to_vec();
    let n: usize = shape.iter().product();
    let keep = T::lit(1.0 / (1.0 - rate as f64));
    let mask = (0..n).map(|_| if rng.uniform() < rate as f64 { T::zero() } else { keep }).collect();
    let m = tape.constant(Tensor::new(&shape, mask)?);
    tape.mul(x, m)
}
