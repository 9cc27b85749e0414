//! Dense vector and row-major matrix kernels.
//!
//! Every reduction runs in a fixed sequential order so results are
//! bit-identical between runs and thread counts. Row-parallel kernels only
//! split work across output rows; each output element is still summed
//! sequentially.

use std::ops::Deref;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Work (multiply-adds) below which kernels stay on the calling thread.
const PAR_THRESHOLD: usize = 1 << 15;

/// A non-empty vector of finite 64-bit floats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct DenseVector(Vec<f64>);

impl DenseVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("vector must have dimension > 0"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("entry {i} is not finite")));
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for DenseVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for DenseVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<DenseVector> for Vec<f64> {
    fn from(v: DenseVector) -> Self {
        v.0
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

#[inline]
pub fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        acc += d * d;
    }
    acc
}

/// Result of [`l2_normalize`]. `was_zero` is the diagnostic flag raised when
/// the input had no direction and the first basis vector was substituted.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub values: Vec<f64>,
    pub was_zero: bool,
}

pub fn l2_normalize(v: &[f64]) -> Normalized {
    let mut values = v.to_vec();
    let was_zero = normalize_in_place(&mut values) == 0.0;
    Normalized { values, was_zero }
}

/// Normalizes `v` to unit length and returns the original norm. A zero (or
/// empty-direction) vector becomes `e1` and the returned norm is 0.
pub fn normalize_in_place(v: &mut [f64]) -> f64 {
    let n = norm(v);
    if n > 0.0 && n.is_finite() {
        for x in v.iter_mut() {
            *x /= n;
        }
        n
    } else {
        v.iter_mut().for_each(|x| *x = 0.0);
        if let Some(first) = v.first_mut() {
            *first = 1.0;
        }
        0.0
    }
}

/// Pullback of `y = v / |v|`: returns dL/dv given the unit output `y`, the
/// input norm, and dL/dy.
pub fn normalize_backward(y: &[f64], input_norm: f64, grad_y: &[f64]) -> Vec<f64> {
    if input_norm == 0.0 {
        return vec![0.0; y.len()];
    }
    let proj = dot(y, grad_y);
    y.iter().zip(grad_y).map(|(yi, gi)| (gi - yi * proj) / input_norm).collect()
}

/// Temperature-scaled softmax with max subtraction.
pub fn softmax_temp(logits: &[f64], tau: f64) -> Result<Vec<f64>> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::invalid(format!("temperature must be > 0, got {tau}")));
    }
    if logits.is_empty() {
        return Err(Error::invalid("softmax of an empty vector"));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("softmax logits must be finite"));
    }
    Ok(softmax_unchecked(logits, tau))
}

pub(crate) fn softmax_unchecked(logits: &[f64], tau: f64) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|l| ((l - max) / tau).exp()).collect();
    let sum: f64 = out.iter().sum();
    for p in out.iter_mut() {
        *p /= sum;
    }
    out
}

/// log-sum-exp of `scores`, computed stably.
pub fn log_sum_exp(scores: &[f64]) -> f64 {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut acc = 0.0;
    for s in scores {
        acc += (s - max).exp();
    }
    max + acc.ln()
}

/// Pullback of `p = softmax(logits / tau)`: dL/dlogits from dL/dp.
pub fn softmax_temp_backward(p: &[f64], grad_p: &[f64], tau: f64) -> Vec<f64> {
    let inner = dot(p, grad_p);
    p.iter().zip(grad_p).map(|(pk, gk)| pk * (gk - inner) / tau).collect()
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate().skip(1) {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "matrix {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::invalid(format!("row {i} has {} columns, expected {cols}", r.len())));
            }
            data.extend_from_slice(r);
        }
        Ok(Self { rows: rows.len(), cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact panics on zero; an empty-column matrix has no data anyway
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    /// Normalizes every row in place and returns the original row norms.
    pub fn normalize_rows(&mut self) -> Vec<f64> {
        let cols = self.cols;
        self.data.chunks_exact_mut(cols.max(1)).map(normalize_in_place).collect()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

fn fill_rows<F>(out: &mut Matrix, work: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    let cols = out.cols.max(1);
    if work >= PAR_THRESHOLD {
        out.data.par_chunks_exact_mut(cols).enumerate().for_each(|(i, row)| f(i, row));
    } else {
        out.data.chunks_exact_mut(cols).enumerate().for_each(|(i, row)| f(i, row));
    }
}

/// `a · bᵀ` for `a: m×k`, `b: n×k`.
pub fn matmul_nt(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.cols {
        return Err(Error::invalid(format!("matmul_nt: inner dimensions {} and {} differ", a.cols, b.cols)));
    }
    let mut out = Matrix::zeros(a.rows, b.rows);
    fill_rows(&mut out, a.rows * b.rows * a.cols, |i, row| {
        let ai = a.row(i);
        for (j, o) in row.iter_mut().enumerate() {
            *o = dot(ai, b.row(j));
        }
    });
    Ok(out)
}

/// `a · b` for `a: m×k`, `b: k×n`.
pub fn matmul_nn(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::invalid(format!("matmul_nn: inner dimensions {} and {} differ", a.cols, b.rows)));
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    fill_rows(&mut out, a.rows * b.cols * a.cols, |i, row| {
        for (k, aik) in a.row(i).iter().enumerate() {
            if *aik == 0.0 {
                continue;
            }
            for (o, bkj) in row.iter_mut().zip(b.row(k)) {
                *o += aik * bkj;
            }
        }
    });
    Ok(out)
}

/// `aᵀ · b` for `a: m×k`, `b: m×n`; the result is `k×n`.
pub fn matmul_tn(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.rows != b.rows {
        return Err(Error::invalid(format!("matmul_tn: row counts {} and {} differ", a.rows, b.rows)));
    }
    let mut out = Matrix::zeros(a.cols, b.cols);
    fill_rows(&mut out, a.rows * a.cols * b.cols, |k, row| {
        for i in 0..a.rows {
            let aik = a.get(i, k);
            if aik == 0.0 {
                continue;
            }
            for (o, bij) in row.iter_mut().zip(b.row(i)) {
                *o += aik * bij;
            }
        }
    });
    Ok(out)
}
