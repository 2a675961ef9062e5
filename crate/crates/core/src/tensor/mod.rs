//! Dense row-major tensors with a reverse-mode tape.
//!
//! Every value that flows through the model is a rank-2 [`Tensor`]; vectors
//! are `[1, n]` rows or `[n, 1]` columns and scalars are `[1, 1]`. Complex
//! embeddings are stored as interleaved `(re, im)` pairs.

mod gradcheck;
mod optim;
mod param;
mod tape;

pub use gradcheck::{grad_check, GradCheckReport, FD_STEP};
pub use optim::{Adam, AdamConfig};
pub use param::{ParamId, Parameter, ParamStore};
pub use tape::{Gradients, Tape, Var};

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Debug;

#[allow(unused_imports)] // inherent methods shadow it when std is linked
use num_traits::Float;
use serde::{Deserialize, Serialize};

/// Floating point element type of a tensor.
pub trait Real: Float + Debug + Default + Send + Sync + 'static {
    const PRECISION: Precision;

    fn from_f64(v: f64) -> Self;

    fn as_f64(self) -> f64;
}

impl Real for f32 {
    const PRECISION: Precision = Precision::F32;

    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    const PRECISION: Precision = Precision::F64;

    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    pub fn name(self) -> &'static str {
        match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        }
    }

    pub fn byte_width(self) -> usize {
        match self {
            Precision::F32 => 4,
            Precision::F64 => 8,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "f32" | "32" => Some(Precision::F32),
            "f64" | "64" => Some(Precision::F64),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TensorError {
    #[error("shape error in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },
    #[error("variable does not belong to this tape")]
    NotOnTape,
    #[error("backward output must be a single element, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("non-finite loss value {0}")]
    NonFinite(f64),
}

pub(crate) fn shape_err(op: &'static str, detail: String) -> TensorError {
    TensorError::Shape { op, detail }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self, TensorError> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(shape_err(
                "tensor",
                format!("shape {:?} needs {} values, got {}", shape, n, data.len()),
            ));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor { shape: vec![rows, cols], data: vec![T::zero(); rows * cols] }
    }

    pub fn full(rows: usize, cols: usize, value: T) -> Self {
        Tensor { shape: vec![rows, cols], data: vec![value; rows * cols] }
    }

    pub fn scalar(value: T) -> Self {
        Tensor { shape: vec![1, 1], data: vec![value] }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = T::one();
        }
        t
    }

    pub fn row(values: Vec<T>) -> Self {
        Tensor { shape: vec![1, values.len()], data: values }
    }

    pub fn column(values: Vec<T>) -> Self {
        Tensor { shape: vec![values.len(), 1], data: values }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self, TensorError> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(shape_err("from_rows", format!("ragged rows {} vs {}", r.len(), cols)));
            }
            data.extend_from_slice(r);
        }
        Ok(Tensor { shape: vec![rows.len(), cols], data })
    }

    pub fn from_f64(rows: usize, cols: usize, values: &[f64]) -> Result<Self, TensorError> {
        Self::new(vec![rows, cols], values.iter().map(|&v| T::from_f64(v)).collect())
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

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// `(rows, cols)` of a rank-2 tensor.
    pub fn dims(&self, op: &'static str) -> Result<(usize, usize), TensorError> {
        match self.shape.as_slice() {
            [r, c] => Ok((*r, *c)),
            other => Err(shape_err(op, format!("expected rank-2 tensor, got {:?}", other))),
        }
    }

    pub(crate) fn rows_cols(&self) -> (usize, usize) {
        match self.shape.as_slice() {
            [r, c] => (*r, *c),
            [n] => (1, *n),
            [] => (1, 1),
            s => (s[0], s[1..].iter().product()),
        }
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        let (_, c) = self.rows_cols();
        self.data[row * c + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: T) {
        let (_, c) = self.rows_cols();
        self.data[row * c + col] = value;
    }

    pub fn row_slice(&self, row: usize) -> &[T] {
        let (_, c) = self.rows_cols();
        &self.data[row * c..(row + 1) * c]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&x| f(x)).collect() }
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| U::from_f64(x.as_f64())).collect(),
        }
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|x| x.as_f64()).collect()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn fill(&mut self, value: T) {
        self.data.iter_mut().for_each(|x| *x = value);
    }

    pub(crate) fn add_assign(&mut self, other: &Tensor<T>) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
    }

    /// Plain matrix product without recording, `[m,k] x [k,n]`.
    pub fn matmul(&self, other: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
        let (m, k) = self.dims("matmul")?;
        let (k2, n) = other.dims("matmul")?;
        if k != k2 {
            return Err(shape_err("matmul", format!("[{m},{k}] x [{k2},{n}]")));
        }
        let mut out = vec![T::zero(); m * n];
        matmul_into(&self.data, &other.data, &mut out, m, k, n);
        Ok(Tensor { shape: vec![m, n], data: out })
    }

    pub fn transpose(&self) -> Result<Tensor<T>, TensorError> {
        let (m, n) = self.dims("transpose")?;
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = self.data[i * n + j];
            }
        }
        Ok(Tensor { shape: vec![n, m], data: out })
    }
}

/// `out += a[m,k] * b[k,n]`, i-k-j loop order so the inner loop is contiguous.
pub(crate) fn matmul_into<T: Real>(a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o = *o + av * bv;
            }
        }
    }
}

#[cfg(test)]
mod tests;
