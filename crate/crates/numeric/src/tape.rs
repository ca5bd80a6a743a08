//! Reverse-mode differentiation over a linear tape.
//!
//! Every op appends a node holding its value. `backward` walks the tape in
//! reverse, so a tape is built once per forward pass and then dropped.

use crate::tensor::{gemm, Scalar, Tensor};
use crate::{shape_err, NumericError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, T),
    OneMinus(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    ConcatRows(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    Reshape(Var),
    SoftmaxRows(Var),
    GroupWeightedSum(Var, Var),
    SumAll(Var),
    Conv1d { x: Var, w: Var, b: Var, cols: Vec<T>, geo: ConvGeometry },
    CrossEntropy { logits: Var, targets: Vec<usize>, mask: Vec<bool>, probs: Vec<T>, count: usize },
}

#[derive(Debug, Clone, Copy)]
struct ConvGeometry {
    batch: usize,
    t_in: usize,
    t_out: usize,
    channels: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

pub struct Tape<T: Scalar = f32> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Tape { nodes: Vec::new(), grads: Vec::new() }
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Tape<T> {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable input: gradients are accumulated for it.
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Gradient of the last `backward` loss with respect to `v`; zeros when
    /// `v` did not influence the loss.
    pub fn grad(&self, v: Var) -> Tensor<T> {
        let shape = self.nodes[v.0].value.shape();
        match self.grads.get(v.0).and_then(|g| g.as_ref()) {
            Some(g) => Tensor::new(shape, g.clone()).expect("grad shape"),
            None => Tensor::zeros(shape),
        }
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    fn dims2(&self, op: &'static str, v: Var) -> Result<(usize, usize)> {
        let s = self.shape(v);
        if s.len() != 2 {
            return Err(shape_err(op, &[s]));
        }
        Ok((s[0], s[1]))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims2("matmul", a)?;
        let (k2, n) = self.dims2("matmul", b)?;
        if k != k2 {
            return Err(shape_err("matmul", &[self.shape(a), self.shape(b)]));
        }
        let mut out = vec![T::zero(); m * n];
        gemm(m, k, n, self.value(a).data(), false, self.value(b).data(), false, &mut out, T::zero());
        let ng = self.ng(&[a, b]);
        Ok(self.push(Tensor::new(&[m, n], out)?, Op::MatMul(a, b), ng))
    }

    fn zip(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err(op, &[ta.shape(), tb.shape()]));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape(), data)
    }

    fn map(&self, a: Var, f: impl Fn(T) -> T) -> Tensor<T> {
        let ta = self.value(a);
        Tensor::new(ta.shape(), ta.data().iter().map(|&x| f(x)).collect()).expect("same shape")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip("add", a, b, |x, y| x + y)?;
        let ng = self.ng(&[a, b]);
        Ok(self.push(t, Op::Add(a, b), ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip("sub", a, b, |x, y| x - y)?;
        let ng = self.ng(&[a, b]);
        Ok(self.push(t, Op::Sub(a, b), ng))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip("mul", a, b, |x, y| x * y)?;
        let ng = self.ng(&[a, b]);
        Ok(self.push(t, Op::Mul(a, b), ng))
    }

    /// Adds a row vector (shape `[n]` or `[1, n]`) to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let ta = self.value(a);
        let tb = self.value(bias);
        let n = ta.cols();
        if tb.len() != n || tb.rows() != 1 {
            return Err(shape_err("add_row", &[ta.shape(), tb.shape()]));
        }
        let mut data = ta.data().to_vec();
        for row in data.chunks_mut(n) {
            for (x, &b) in row.iter_mut().zip(tb.data()) {
                *x = *x + b;
            }
        }
        let t = Tensor::new(ta.shape(), data)?;
        let ng = self.ng(&[a, bias]);
        Ok(self.push(t, Op::AddRow(a, bias), ng))
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let t = self.map(a, |x| x * s);
        let ng = self.ng(&[a]);
        self.push(t, Op::Scale(a, s), ng)
    }

    pub fn one_minus(&mut self, a: Var) -> Var {
        let t = self.map(a, |x| T::one() - x);
        let ng = self.ng(&[a]);
        self.push(t, Op::OneMinus(a), ng)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let t = self.map(a, sigmoid::<T>);
        let ng = self.ng(&[a]);
        self.push(t, Op::Sigmoid(a), ng)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let t = self.map(a, T::tanh);
        let ng = self.ng(&[a]);
        self.push(t, Op::Tanh(a), ng)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let t = self.map(a, |x| x.max(T::zero()));
        let ng = self.ng(&[a]);
        self.push(t, Op::Relu(a), ng)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(shape_err("concat_cols", &[]));
        };
        let m = self.value(first).rows();
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let t = self.value(p);
            if t.rows() != m || t.shape().len() != 2 {
                let shapes: Vec<&[usize]> = parts.iter().map(|&p| self.shape(p)).collect();
                return Err(shape_err("concat_cols", &shapes));
            }
            widths.push(t.cols());
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(m * total);
        for r in 0..m {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let ng = self.ng(parts);
        Ok(self.push(Tensor::new(&[m, total], data)?, Op::ConcatCols(parts.to_vec()), ng))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (m, n) = self.dims2("slice_cols", a)?;
        if start + len > n {
            return Err(shape_err("slice_cols", &[self.shape(a), &[start, len]]));
        }
        let ta = self.value(a);
        let mut data = Vec::with_capacity(m * len);
        for r in 0..m {
            data.extend_from_slice(&ta.row(r)[start..start + len]);
        }
        let ng = self.ng(&[a]);
        Ok(self.push(Tensor::new(&[m, len], data)?, Op::SliceCols(a, start), ng))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(shape_err("concat_rows", &[]));
        };
        let n = self.value(first).cols();
        let mut data = Vec::new();
        let mut m = 0;
        for &p in parts {
            let t = self.value(p);
            if t.cols() != n {
                let shapes: Vec<&[usize]> = parts.iter().map(|&p| self.shape(p)).collect();
                return Err(shape_err("concat_rows", &shapes));
            }
            m += t.rows();
            data.extend_from_slice(t.data());
        }
        let ng = self.ng(parts);
        Ok(self.push(Tensor::new(&[m, n], data)?, Op::ConcatRows(parts.to_vec()), ng))
    }

    /// Output row `i` is row `index[i]` of `a`. Embedding lookup is this op
    /// applied to the table.
    pub fn gather_rows(&mut self, a: Var, index: &[usize]) -> Result<Var> {
        let ta = self.value(a);
        let (m, n) = (ta.rows(), ta.cols());
        let mut data = Vec::with_capacity(index.len() * n);
        for &i in index {
            if i >= m {
                return Err(NumericError::Index { op: "gather_rows", index: i, bound: m });
            }
            data.extend_from_slice(ta.row(i));
        }
        let ng = self.ng(&[a]);
        Ok(self.push(Tensor::new(&[index.len(), n], data)?, Op::GatherRows(a, index.to_vec()), ng))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(a).clone().reshaped(shape)?;
        let ng = self.ng(&[a]);
        Ok(self.push(t, Op::Reshape(a), ng))
    }

    /// Row-wise softmax. Entries where `mask` is false get probability zero;
    /// a fully masked row is all zeros.
    pub fn softmax_rows(&mut self, a: Var, mask: Option<&[bool]>) -> Result<Var> {
        let ta = self.value(a);
        if let Some(m) = mask {
            if m.len() != ta.len() {
                return Err(shape_err("softmax_rows", &[ta.shape(), &[m.len()]]));
            }
        }
        let n = ta.cols();
        let mut data = ta.data().to_vec();
        for (r, row) in data.chunks_mut(n).enumerate() {
            let keep = |j: usize| mask.is_none_or(|m| m[r * n + j]);
            softmax_in_place(row, keep);
        }
        let t = Tensor::new(ta.shape(), data)?;
        let ng = self.ng(&[a]);
        Ok(self.push(t, Op::SoftmaxRows(a), ng))
    }

    /// `alpha` is `[B, T]`, `h` is `[B*T, D]` laid out batch-major;
    /// output row b is `sum_t alpha[b, t] * h[b*T + t]`.
    pub fn group_weighted_sum(&mut self, alpha: Var, h: Var) -> Result<Var> {
        let (b, t) = self.dims2("group_weighted_sum", alpha)?;
        let (bt, d) = self.dims2("group_weighted_sum", h)?;
        if bt != b * t {
            return Err(shape_err("group_weighted_sum", &[self.shape(alpha), self.shape(h)]));
        }
        let (ta, th) = (self.value(alpha), self.value(h));
        let mut out = vec![T::zero(); b * d];
        for bi in 0..b {
            let o = &mut out[bi * d..(bi + 1) * d];
            for ti in 0..t {
                let w = ta.data()[bi * t + ti];
                if w != T::zero() {
                    for (x, &y) in o.iter_mut().zip(th.row(bi * t + ti)) {
                        *x = *x + w * y;
                    }
                }
            }
        }
        let ng = self.ng(&[alpha, h]);
        Ok(self.push(Tensor::new(&[b, d], out)?, Op::GroupWeightedSum(alpha, h), ng))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().fold(T::zero(), |acc, &x| acc + x);
        let ng = self.ng(&[a]);
        self.push(Tensor::scalar(s), Op::SumAll(a), ng)
    }

    /// 1-D convolution over time. `x` is `[batch * t_in, channels]` with
    /// each sequence stored time-major, `w` is `[kernel * channels, out]`
    /// (kernel-offset major), `b` is `[out]`. Requires `kernel >= stride`
    /// and `t_in % stride == 0`; the input is zero-padded by
    /// `(kernel - stride) / 2` on the left so that `t_out = t_in / stride`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, batch: usize, stride: usize) -> Result<Var> {
        let (rows, channels) = self.dims2("conv1d", x)?;
        let (kc, out_ch) = self.dims2("conv1d", w)?;
        let bad = || shape_err("conv1d", &[self.shape(x), self.shape(w), self.shape(b), &[batch, stride]]);
        if batch == 0 || stride == 0 || rows % batch != 0 || channels == 0 || kc % channels != 0 {
            return Err(bad());
        }
        let t_in = rows / batch;
        let kernel = kc / channels;
        if kernel < stride || !t_in.is_multiple_of(stride) || self.value(b).len() != out_ch {
            return Err(bad());
        }
        let t_out = t_in / stride;
        let geo = ConvGeometry { batch, t_in, t_out, channels, kernel, stride, pad: (kernel - stride) / 2 };
        let tx = self.value(x);
        let mut cols = vec![T::zero(); batch * t_out * kc];
        for bi in 0..batch {
            for to in 0..t_out {
                let dst = &mut cols[(bi * t_out + to) * kc..(bi * t_out + to + 1) * kc];
                for k in 0..kernel {
                    if let Some(ti) = geo.source(to, k) {
                        dst[k * channels..(k + 1) * channels].copy_from_slice(tx.row(bi * t_in + ti));
                    }
                }
            }
        }
        let m = batch * t_out;
        let mut out = vec![T::zero(); m * out_ch];
        for row in out.chunks_mut(out_ch) {
            row.copy_from_slice(self.value(b).data());
        }
        gemm(m, kc, out_ch, &cols, false, self.value(w).data(), false, &mut out, T::one());
        let ng = self.ng(&[x, w, b]);
        Ok(self.push(Tensor::new(&[m, out_ch], out)?, Op::Conv1d { x, w, b, cols, geo }, ng))
    }

    /// Mean token cross-entropy over rows whose mask is true. Returns a
    /// scalar; zero when every row is masked.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize], mask: &[bool]) -> Result<Var> {
        let (n, v) = self.dims2("cross_entropy", logits)?;
        if targets.len() != n || mask.len() != n {
            return Err(shape_err("cross_entropy", &[self.shape(logits), &[targets.len()], &[mask.len()]]));
        }
        let mut probs = self.value(logits).data().to_vec();
        let mut loss = 0.0f64;
        let mut count = 0;
        for (r, row) in probs.chunks_mut(v).enumerate() {
            softmax_in_place(row, |_| true);
            if mask[r] {
                let t = targets[r];
                if t >= v {
                    return Err(NumericError::Index { op: "cross_entropy", index: t, bound: v });
                }
                loss -= row[t].max(T::min_positive_value()).as_f64().ln();
                count += 1;
            }
        }
        let value = if count == 0 { T::zero() } else { T::lit(loss / count as f64) };
        let ng = self.ng(&[logits]);
        let op = Op::CrossEntropy { logits, targets: targets.to_vec(), mask: mask.to_vec(), probs, count };
        Ok(self.push(Tensor::scalar(value), op, ng))
    }

    /// Accumulates d`loss`/d`v` for every node on the tape. `loss` must be
    /// a single-element tensor.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(shape_err("backward", &[self.shape(loss)]));
        }
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        self.grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(g) = self.grads[i].take() else { continue };
            self.propagate(i, &g);
            self.grads[i] = Some(g);
        }
        Ok(())
    }

    fn propagate(&mut self, i: usize, g: &[T]) {
        let Tape { nodes, grads } = self;
        let nodes: &[Node<T>] = nodes;
        let val = |v: &Var| nodes[v.0].value.data();
        let needs = |v: &Var| nodes[v.0].needs_grad;
        match &nodes[i].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = (nodes[a.0].value.shape()[0], nodes[a.0].value.shape()[1]);
                let n = nodes[b.0].value.shape()[1];
                if let Some(da) = acc(nodes, grads, *a) {
                    gemm(m, n, k, g, false, val(b), true, da, T::one());
                }
                if let Some(db) = acc(nodes, grads, *b) {
                    gemm(k, m, n, val(a), true, g, false, db, T::one());
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if let Some(d) = acc(nodes, grads, v) {
                        add_into(d, g);
                    }
                }
            }
            Op::Sub(a, b) => {
                if let Some(d) = acc(nodes, grads, *a) {
                    add_into(d, g);
                }
                if let Some(d) = acc(nodes, grads, *b) {
                    d.iter_mut().zip(g).for_each(|(x, &y)| *x = *x - y);
                }
            }
            Op::Mul(a, b) => {
                if let Some(d) = acc(nodes, grads, *a) {
                    d.iter_mut().zip(g).zip(val(b)).for_each(|((x, &y), &o)| *x = *x + y * o);
                }
                if let Some(d) = acc(nodes, grads, *b) {
                    d.iter_mut().zip(g).zip(val(a)).for_each(|((x, &y), &o)| *x = *x + y * o);
                }
            }
            Op::AddRow(a, bias) => {
                if let Some(d) = acc(nodes, grads, *a) {
                    add_into(d, g);
                }
                if let Some(d) = acc(nodes, grads, *bias) {
                    let n = d.len();
                    for row in g.chunks(n) {
                        add_into(d, row);
                    }
                }
            }
            Op::Scale(a, s) => {
                if let Some(d) = acc(nodes, grads, *a) {
                    d.iter_mut().zip(g).for_each(|(x, &y)| *x = *x + y * *s);
                }
            }
            Op::OneMinus(a) => {
                if let Some(d) = acc(nodes, grads, *a) {
                    d.iter_mut().zip(g).for_each(|(x, &y)| *x = *x - y);
                }
            }
            Op::Sigmoid(a) | Op::Tanh(a) | Op::Relu(a) => {
                let out = nodes[i].value.data();
                let deriv: fn(T) -> T = match &nodes[i].op {
                    Op::Sigmoid(_) => |y| y * (T::one() - y),
                    Op::Tanh(_) => |y| T::one() - y * y,
                    _ => |y| if y > T::zero() { T::one() } else { T::zero() },
                };
                if let Some(d) = acc(nodes, grads, *a) {
                    d.iter_mut().zip(g).zip(out).for_each(|((x, &gy), &y)| *x = *x + gy * deriv(y));
                }
            }
            Op::ConcatCols(parts) => {
                let total = nodes[i].value.cols();
                let mut offset = 0;
                for &p in parts {
                    let w = nodes[p.0].value.cols();
                    if let Some(d) = acc(nodes, grads, p) {
                        for (r, row) in d.chunks_mut(w).enumerate() {
                            add_into(row, &g[r * total + offset..r * total + offset + w]);
                        }
                    }
                    offset += w;
                }
            }
            Op::SliceCols(a, start) => {
                let len = nodes[i].value.cols();
                let n = nodes[a.0].value.cols();
                if let Some(d) = acc(nodes, grads, *a) {
                    for (r, row) in d.chunks_mut(n).enumerate() {
                        add_into(&mut row[*start..start + len], &g[r * len..(r + 1) * len]);
                    }
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = nodes[p.0].value.len();
                    if let Some(d) = acc(nodes, grads, p) {
                        add_into(d, &g[offset..offset + len]);
                    }
                    offset += len;
                }
            }
            Op::GatherRows(a, index) => {
                let n = nodes[a.0].value.cols();
                if let Some(d) = acc(nodes, grads, *a) {
                    for (r, &src) in index.iter().enumerate() {
                        add_into(&mut d[src * n..(src + 1) * n], &g[r * n..(r + 1) * n]);
                    }
                }
            }
            Op::Reshape(a) => {
                if let Some(d) = acc(nodes, grads, *a) {
                    add_into(d, g);
                }
            }
            Op::SoftmaxRows(a) => {
                let y = nodes[i].value.data();
                let n = nodes[i].value.cols();
                if let Some(d) = acc(nodes, grads, *a) {
                    for ((dr, gr), yr) in d.chunks_mut(n).zip(g.chunks(n)).zip(y.chunks(n)) {
                        let dot: T = gr.iter().zip(yr).map(|(&a, &b)| a * b).sum();
                        for j in 0..n {
                            dr[j] = dr[j] + yr[j] * (gr[j] - dot);
                        }
                    }
                }
            }
            Op::GroupWeightedSum(alpha, h) => {
                let (b, t) = (nodes[alpha.0].value.shape()[0], nodes[alpha.0].value.shape()[1]);
                let dd = nodes[h.0].value.cols();
                if let Some(da) = acc(nodes, grads, *alpha) {
                    let hv = val(h);
                    for bi in 0..b {
                        let gb = &g[bi * dd..(bi + 1) * dd];
                        for ti in 0..t {
                            let hr = &hv[(bi * t + ti) * dd..(bi * t + ti + 1) * dd];
                            da[bi * t + ti] = da[bi * t + ti] + gb.iter().zip(hr).map(|(&x, &y)| x * y).sum::<T>();
                        }
                    }
                }
                if let Some(dh) = acc(nodes, grads, *h) {
                    let av = val(alpha);
                    for bi in 0..b {
                        let gb = &g[bi * dd..(bi + 1) * dd];
                        for ti in 0..t {
                            let w = av[bi * t + ti];
                            let row = &mut dh[(bi * t + ti) * dd..(bi * t + ti + 1) * dd];
                            row.iter_mut().zip(gb).for_each(|(x, &y)| *x = *x + w * y);
                        }
                    }
                }
            }
            Op::SumAll(a) => {
                if let Some(d) = acc(nodes, grads, *a) {
                    d.iter_mut().for_each(|x| *x = *x + g[0]);
                }
            }
            Op::Conv1d { x, w, b, cols, geo } => {
                let m = geo.batch * geo.t_out;
                let kc = geo.kernel * geo.channels;
                let out_ch = nodes[i].value.cols();
                if let Some(db) = acc(nodes, grads, *b) {
                    for row in g.chunks(out_ch) {
                        add_into(db, row);
                    }
                }
                if let Some(dw) = acc(nodes, grads, *w) {
                    gemm(kc, m, out_ch, cols, true, g, false, dw, T::one());
                }
                if needs(x) {
                    let mut dcols = vec![T::zero(); m * kc];
                    gemm(m, out_ch, kc, g, false, val(w), true, &mut dcols, T::zero());
                    let c = geo.channels;
                    let dx = acc(nodes, grads, *x).expect("needs grad");
                    for bi in 0..geo.batch {
                        for to in 0..geo.t_out {
                            let src = &dcols[(bi * geo.t_out + to) * kc..(bi * geo.t_out + to + 1) * kc];
                            for k in 0..geo.kernel {
                                if let Some(ti) = geo.source(to, k) {
                                    let r = bi * geo.t_in + ti;
                                    add_into(&mut dx[r * c..(r + 1) * c], &src[k * c..(k + 1) * c]);
                                }
                            }
                        }
                    }
                }
            }
            Op::CrossEntropy { logits, targets, mask, probs, count } => {
                if *count > 0 {
                    let v = nodes[logits.0].value.cols();
                    let s = g[0] / T::lit(*count as f64);
                    if let Some(d) = acc(nodes, grads, *logits) {
                        for (r, row) in d.chunks_mut(v).enumerate() {
                            if !mask[r] {
                                continue;
                            }
                            let p = &probs[r * v..(r + 1) * v];
                            for j in 0..v {
                                row[j] = row[j] + s * p[j];
                            }
                            row[targets[r]] = row[targets[r]] - s;
                        }
                    }
                }
            }
        }
    }
}

fn acc<'a, T: Scalar>(nodes: &[Node<T>], grads: &'a mut [Option<Vec<T>>], v: Var) -> Option<&'a mut [T]> {
    if !nodes[v.0].needs_grad {
        return None;
    }
    let len = nodes[v.0].value.len();
    Some(grads[v.0].get_or_insert_with(|| vec![T::zero(); len]).as_mut_slice())
}

impl ConvGeometry {
    fn source(&self, to: usize, k: usize) -> Option<usize> {
        let t = (to * self.stride + k) as isize - self.pad as isize;
        (t >= 0 && (t as usize) < self.t_in).then_some(t as usize)
    }
}

pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn softmax_in_place<T: Scalar>(row: &mut [T], keep: impl Fn(usize) -> bool) {
    let mut max = T::neg_infinity();
    for (j, &x) in row.iter().enumerate() {
        if keep(j) && x > max {
            max = x;
        }
    }
    if max == T::neg_infinity() {
        row.iter_mut().for_each(|x| *x = T::zero());
        return;
    }
    let mut sum = T::zero();
    for (j, x) in row.iter_mut().enumerate() {
        *x = if keep(j) { (*x - max).exp() } else { T::zero() };
        sum = sum + *x;
    }
    row.iter_mut().for_each(|x| *x = *x / sum);
}

fn add_into<T: Scalar>(dst: &mut [T], src: &[T]) {
    dst.iter_mut().zip(src).for_each(|(x, &y)| *x = *x + y);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f32]) -> Tensor {
        Tensor::new(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn matmul_grad_by_hand() {
        let mut tape: Tape = Tape::new();
        let a = tape.leaf(t(&[1, 2], &[1.0, 2.0]));
        let b = tape.leaf(t(&[2, 1], &[3.0, 4.0]));
        let c = tape.matmul(a, b).unwrap();
        tape.backward(c).unwrap();
        assert_eq!(tape.value(c).data(), &[11.0]);
        assert_eq!(tape.grad(a).data(), &[3.0, 4.0]);
        assert_eq!(tape.grad(b).data(), &[1.0, 2.0]);
    }

    #[test]
    fn shape_errors_name_op_and_shapes() {
        let mut tape: Tape = Tape::new();
        let a = tape.leaf(Tensor::zeros(&[2, 3]));
        let b = tape.leaf(Tensor::zeros(&[2, 3]));
        let err = tape.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("matmul") && err.contains("[2, 3] vs [2, 3]"), "{err}");
        let c = tape.leaf(Tensor::zeros(&[3, 2]));
        assert!(tape.add(a, c).unwrap_err().to_string().starts_with("add"));
    }

    #[test]
    fn masked_softmax_zeroes_masked_entries() {
        let mut tape: Tape = Tape::new();
        let a = tape.leaf(t(&[2, 3], &[1.0, 2.0, 3.0, 0.0, 0.0, 0.0]));
        let s = tape.softmax_rows(a, Some(&[true, true, false, false, false, false])).unwrap();
        let v = tape.value(s).data();
        assert!((v[0] + v[1] - 1.0).abs() < 1e-6);
        assert_eq!(&v[2..], &[0.0; 4]);
    }

    #[test]
    fn cross_entropy_ignores_masked_rows() {
        let mut tape: Tape = Tape::new();
        let l = tape.leaf(t(&[2, 2], &[0.0, 0.0, 5.0, -5.0]));
        let ce = tape.cross_entropy(l, &[0, 1], &[true, false]).unwrap();
        assert!((tape.value(ce).data()[0] - std::f32::consts::LN_2).abs() < 1e-6);
        tape.backward(ce).unwrap();
        assert_eq!(&tape.grad(l).data()[2..], &[0.0, 0.0]);
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut tape: Tape = Tape::new();
        let a = tape.constant(t(&[1], &[2.0]));
        let b = tape.leaf(t(&[1], &[3.0]));
        let c = tape.mul(a, b).unwrap();
        tape.backward(c).unwrap();
        assert_eq!(tape.grad(a).data(), &[0.0]);
        assert_eq!(tape.grad(b).data(), &[2.0]);
    }
}
