use crate::tape::{Tape, Var};
use crate::tensor::{Scalar, Tensor};
use crate::{shape_err, NumericError, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    /// Global L2 norm the gradient is rescaled to when exceeded.
    pub clip_norm: Option<f32>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8, clip_norm: Some(5.0) }
    }
}

#[derive(Debug, Clone)]
struct Param<T: Scalar> {
    value: Tensor<T>,
    m: Vec<T>,
    v: Vec<T>,
}

/// Named parameters with their Adam moments. Iteration order is by name,
/// which keeps every reduction over parameters deterministic.
#[derive(Debug, Clone)]
pub struct ParamStore<T: Scalar = f32> {
    params: BTreeMap<String, Param<T>>,
    step: u64,
}

/// Parameters placed on a tape as trainable leaves.
#[derive(Debug, Clone, Default)]
pub struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    pub fn new(vars: BTreeMap<String, Var>) -> Bound {
        Bound { vars }
    }

    pub fn has(&self, name: &str) -> bool {
        self.vars.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars.get(name).copied().ok_or_else(|| NumericError::UnknownParam(name.to_string()))
    }
}

/// Per-parameter gradients keyed by name.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads<T: Scalar = f32> {
    pub values: BTreeMap<String, Vec<T>>,
}

impl<T: Scalar> Default for Grads<T> {
    fn default() -> Self {
        Grads { values: BTreeMap::new() }
    }
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        ParamStore { params: BTreeMap::new(), step: 0 }
    }
}

impl<T: Scalar> Grads<T> {
    /// Adds `other` scaled by `weight`. Order of calls fixes the rounding.
    pub fn add_scaled(&mut self, other: &Grads<T>, weight: T) {
        for (name, g) in &other.values {
            let dst = self.values.entry(name.clone()).or_insert_with(|| vec![T::zero(); g.len()]);
            dst.iter_mut().zip(g).for_each(|(d, &x)| *d = *d + weight * x);
        }
    }

    pub fn norm(&self) -> f64 {
        self.values.values().flatten().map(|&x| x.as_f64() * x.as_f64()).sum::<f64>().sqrt()
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> ParamStore<T> {
        ParamStore::default()
    }

    pub fn insert(&mut self, name: &str, value: Tensor<T>) {
        let n = value.len();
        self.params.insert(name.to_string(), Param { value, m: vec![T::zero(); n], v: vec![T::zero(); n] });
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.params.get(name).map(|p| &p.value)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.params.get_mut(name).map(|p| &mut p.value)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.params.iter().map(|(k, p)| (k.as_str(), &p.value))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.params.values().map(|p| p.value.len()).sum()
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn bind(&self, tape: &mut Tape<T>) -> Bound {
        let vars = self.params.iter().map(|(k, p)| (k.clone(), tape.leaf(p.value.clone()))).collect();
        Bound { vars }
    }

    /// Binds every parameter as a constant, for inference.
    pub fn bind_frozen(&self, tape: &mut Tape<T>) -> Bound {
        let vars = self.params.iter().map(|(k, p)| (k.clone(), tape.constant(p.value.clone()))).collect();
        Bound { vars }
    }

    pub fn grads(&self, bound: &Bound, tape: &Tape<T>) -> Grads<T> {
        let values = bound.vars.iter().map(|(k, &v)| (k.clone(), tape.grad(v).into_data())).collect();
        Grads { values }
    }

    /// One bias-corrected Adam update. Returns the gradient norm before
    /// clipping. A non-finite gradient aborts without touching any state.
    pub fn adam_step(&mut self, grads: &Grads<T>, lr: f32, cfg: &AdamConfig) -> Result<f64> {
        for (name, g) in &grads.values {
            let p = self.params.get(name).ok_or_else(|| NumericError::UnknownParam(name.clone()))?;
            if g.len() != p.value.len() {
                return Err(shape_err("adam_step", &[p.value.shape(), &[g.len()]]));
            }
            if g.iter().any(|x| !x.is_finite()) {
                return Err(NumericError::NonFinite(name.clone()));
            }
        }
        let norm = grads.norm();
        let clip = match cfg.clip_norm {
            Some(c) if norm > c as f64 => T::lit(c as f64 / norm),
            _ => T::one(),
        };
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (T::lit(cfg.beta1 as f64), T::lit(cfg.beta2 as f64));
        let (lr, eps) = (T::lit(lr as f64), T::lit(cfg.eps as f64));
        let one = T::one();
        let bc1 = one - b1.powi(t);
        let bc2 = one - b2.powi(t);
        for (name, g) in &grads.values {
            let p = self.params.get_mut(name).expect("checked above");
            let w = p.value.data_mut();
            for j in 0..w.len() {
                let gj = g[j] * clip;
                p.m[j] = b1 * p.m[j] + (one - b1) * gj;
                p.v[j] = b2 * p.v[j] + (one - b2) * gj * gj;
                let mhat = p.m[j] / bc1;
                let vhat = p.v[j] / bc2;
                w[j] = w[j] - lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(norm)
    }

    /// Parameter values and optimizer moments as flat named tensors
    /// (`name`, `name#m`, `name#v`).
    pub fn export(&self, with_moments: bool) -> BTreeMap<String, Tensor<T>> {
        let mut out = BTreeMap::new();
        for (k, p) in &self.params {
            out.insert(k.clone(), p.value.clone());
            if with_moments {
                let s = p.value.shape();
                out.insert(format!("{k}#m"), Tensor::new(s, p.m.clone()).expect("shape"));
                out.insert(format!("{k}#v"), Tensor::new(s, p.v.clone()).expect("shape"));
            }
        }
        out
    }

    pub fn import(tensors: &BTreeMap<String, Tensor<T>>, step: u64) -> Result<ParamStore<T>> {
        let mut store = ParamStore { params: BTreeMap::new(), step };
        for (k, t) in tensors {
            if k.contains('#') {
                continue;
            }
            let mut p = Param { value: t.clone(), m: vec![T::zero(); t.len()], v: vec![T::zero(); t.len()] };
            for (suffix, slot) in [("#m", &mut p.m), ("#v", &mut p.v)] {
                if let Some(mt) = tensors.get(&format!("{k}{suffix}")) {
                    if mt.shape() != t.shape() {
                        return Err(shape_err("import", &[t.shape(), mt.shape()]));
                    }
                    *slot = mt.data().to_vec();
                }
            }
            store.params.insert(k.clone(), p);
        }
        Ok(store)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_adam_step_moves_by_lr() {
        // With bias correction the first step is lr * sign(g) (up to eps).
        let mut s: ParamStore = ParamStore::new();
        s.insert("w", Tensor::new(&[2], vec![1.0, -1.0]).unwrap());
        let mut g: Grads = Grads::default();
        g.values.insert("w".into(), vec![0.5, -2.0]);
        let cfg = AdamConfig { clip_norm: None, ..Default::default() };
        s.adam_step(&g, 0.1, &cfg).unwrap();
        let w = s.get("w").unwrap().data();
        assert!((w[0] - 0.9).abs() < 1e-6 && (w[1] + 0.9).abs() < 1e-6, "{w:?}");
    }

    #[test]
    fn nan_gradient_aborts_without_update() {
        let mut s: ParamStore = ParamStore::new();
        s.insert("w", Tensor::new(&[1], vec![1.0]).unwrap());
        let mut g: Grads = Grads::default();
        g.values.insert("w".into(), vec![f32::NAN]);
        let err = s.adam_step(&g, 0.1, &AdamConfig::default()).unwrap_err();
        assert!(matches!(err, NumericError::NonFinite(ref n) if n == "w"));
        assert_eq!(s.get("w").unwrap().data(), &[1.0]);
        assert_eq!(s.step(), 0);
    }

    #[test]
    fn export_import_round_trip() {
        let mut s: ParamStore = ParamStore::new();
        s.insert("a", Tensor::new(&[1, 2], vec![1.0, 2.0]).unwrap());
        let mut g: Grads = Grads::default();
        g.values.insert("a".into(), vec![0.3, 0.1]);
        s.adam_step(&g, 0.01, &AdamConfig::default()).unwrap();
        let back = ParamStore::import(&s.export(true), s.step()).unwrap();
        let mut s2 = s.clone();
        let mut b2 = back.clone();
        s2.adam_step(&g, 0.01, &AdamConfig::default()).unwrap();
        b2.adam_step(&g, 0.01, &AdamConfig::default()).unwrap();
        assert_eq!(s2.get("a"), b2.get("a"));
    }
}
