use crate::{shape_err, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::fmt::Debug;
use std::iter::Sum;

/// Element type of tensors. Training uses `f32`; `f64` exists so that
/// finite-difference checks exercise the same code without float32
/// rounding swamping the difference quotient.
pub trait Scalar:
    num_traits::Float + Default + Debug + Sum + Send + Sync + Serialize + DeserializeOwned + 'static
{
    fn lit(x: f64) -> Self;
    fn as_f64(self) -> f64;

    /// c = op(a) * op(b) + beta * c for row-major buffers; see [`gemm`].
    #[allow(clippy::too_many_arguments)]
    fn gemm(m: usize, k: usize, n: usize, a: &[Self], ta: bool, b: &[Self], tb: bool, c: &mut [Self], beta: Self);
}

fn strides(trans: bool, rows: usize, cols: usize) -> (isize, isize) {
    if trans {
        (1, rows as isize)
    } else {
        (cols as isize, 1)
    }
}

impl Scalar for f32 {
    fn lit(x: f64) -> f32 {
        x as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
    fn gemm(m: usize, k: usize, n: usize, a: &[f32], ta: bool, b: &[f32], tb: bool, c: &mut [f32], beta: f32) {
        check_gemm(m, k, n, a.len(), b.len(), c.len());
        if m == 0 || n == 0 {
            return;
        }
        let (rsa, csa) = strides(ta, m, k);
        let (rsb, csb) = strides(tb, k, n);
        // SAFETY: buffer lengths are checked above and the strides address
        // each matrix within its buffer.
        unsafe {
            matrixmultiply::sgemm(m, k, n, 1.0, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta, c.as_mut_ptr(), n as isize, 1)
        }
    }
}

impl Scalar for f64 {
    fn lit(x: f64) -> f64 {
        x
    }
    fn as_f64(self) -> f64 {
        self
    }
    fn gemm(m: usize, k: usize, n: usize, a: &[f64], ta: bool, b: &[f64], tb: bool, c: &mut [f64], beta: f64) {
        check_gemm(m, k, n, a.len(), b.len(), c.len());
        if m == 0 || n == 0 {
            return;
        }
        let (rsa, csa) = strides(ta, m, k);
        let (rsb, csb) = strides(tb, k, n);
        // SAFETY: as for f32.
        unsafe {
            matrixmultiply::dgemm(m, k, n, 1.0, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta, c.as_mut_ptr(), n as isize, 1)
        }
    }
}

fn check_gemm(m: usize, k: usize, n: usize, a: usize, b: usize, c: usize) {
    assert!(a == m * k && b == k * n && c == m * n, "gemm buffer sizes");
}

/// c = op(a) * op(b) + beta * c where `a` is m x k and `b` is k x n after
/// the optional transposes.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm<T: Scalar>(m: usize, k: usize, n: usize, a: &[T], ta: bool, b: &[T], tb: bool, c: &mut [T], beta: T) {
    T::gemm(m, k, n, a, ta, b, tb, c, beta)
}

/// Dense row-major tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Tensor<T = f32> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: &[usize], data: Vec<T>) -> Result<Tensor<T>> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(shape_err("tensor", &[shape, &[data.len()]]));
        }
        Ok(Tensor { shape: shape.to_vec(), data })
    }

    pub fn zeros(shape: &[usize]) -> Tensor<T> {
        Tensor::filled(shape, T::zero())
    }

    pub fn filled(shape: &[usize], value: T) -> Tensor<T> {
        Tensor { shape: shape.to_vec(), data: vec![value; shape.iter().product()] }
    }

    pub fn scalar(value: T) -> Tensor<T> {
        Tensor { shape: vec![1], data: vec![value] }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Size of the last dimension.
    pub fn cols(&self) -> usize {
        self.shape.last().copied().unwrap_or(1)
    }

    /// Product of all but the last dimension.
    pub fn rows(&self) -> usize {
        match self.shape.split_last() {
            Some((_, rest)) => rest.iter().product(),
            None => 1,
        }
    }

    pub fn row(&self, r: usize) -> &[T] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn reshaped(mut self, shape: &[usize]) -> Result<Tensor<T>> {
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(shape_err("reshape", &[&self.shape, shape]));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&x| U::lit(x.as_f64())).collect() }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Tensor<T>) -> f64 {
        self.data.iter().zip(&other.data).map(|(&a, &b)| (a - b).abs().as_f64()).fold(0.0, f64::max)
    }
}
