use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::linalg::{dot, normalize_backward, normalize_in_place, Matrix};
use super::net::{Parameters, Trainable};
use crate::error::{Error, Result};

/// Linear classifier whose rows act as class centroids. Both rows and inputs
/// are l2-normalized, so every logit is a cosine in [−1, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CosineClassifier {
    weight: Matrix,
    grad: Matrix,
}

/// Normalized operands kept for [`CosineClassifier::backward`].
#[derive(Debug, Clone)]
pub struct ClassifierCache {
    z_hat: Matrix,
    z_norms: Vec<f64>,
    w_hat: Matrix,
    w_norms: Vec<f64>,
}

impl CosineClassifier {
    pub fn new<R: Rng + ?Sized>(n_classes: usize, dim: usize, rng: &mut R) -> Result<Self> {
        if n_classes == 0 || dim == 0 {
            return Err(Error::invalid("classifier needs at least one class and dimension"));
        }
        let mut weight = Matrix::zeros(n_classes, dim);
        for v in weight.as_mut_slice() {
            *v = StandardNormal.sample(rng);
        }
        // unit rows keep the angular step size independent of `dim`
        weight.normalize_rows();
        Ok(Self::from_weight(weight))
    }

    pub fn from_weight(weight: Matrix) -> Self {
        let grad = Matrix::zeros(weight.rows(), weight.cols());
        Self { weight, grad }
    }

    pub fn weight(&self) -> &Matrix {
        &self.weight
    }

    pub fn n_classes(&self) -> usize {
        self.weight.rows()
    }

    pub fn dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn min_row_norm(&self) -> f64 {
        self.weight.iter_rows().map(super::linalg::norm).fold(f64::INFINITY, f64::min)
    }

    fn normalized_weight(&self) -> (Matrix, Vec<f64>) {
        let mut w_hat = self.weight.clone();
        let norms = w_hat.normalize_rows();
        (w_hat, norms)
    }

    /// Cosine logits for a batch of features (`rows = samples`).
    pub fn forward(&self, z: &Matrix) -> Result<(Matrix, ClassifierCache)> {
        if z.cols() != self.dim() {
            return Err(Error::invalid(format!("classifier expects dim {}, got {}", self.dim(), z.cols())));
        }
        let (w_hat, w_norms) = self.normalized_weight();
        let mut z_hat = z.clone();
        let z_norms = z_hat.normalize_rows();
        let logits = super::linalg::matmul_nt(&z_hat, &w_hat)?;
        Ok((logits, ClassifierCache { z_hat, z_norms, w_hat, w_norms }))
    }

    pub fn logits(&self, z: &Matrix) -> Result<Matrix> {
        self.forward(z).map(|(l, _)| l)
    }

    /// Accumulates the weight gradient and returns dL/dz.
    pub fn backward(&mut self, cache: &ClassifierCache, grad_logits: &Matrix) -> Result<Matrix> {
        let (b, c) = grad_logits.shape();
        if b != cache.z_hat.rows() || c != self.n_classes() {
            return Err(Error::invalid("classifier gradient shape mismatch"));
        }
        let d = self.dim();
        let grad_w_hat = super::linalg::matmul_tn(grad_logits, &cache.z_hat)?;
        for k in 0..c {
            let gw = normalize_backward(cache.w_hat.row(k), cache.w_norms[k], grad_w_hat.row(k));
            for (acc, v) in self.grad.row_mut(k).iter_mut().zip(&gw) {
                *acc += v;
            }
        }
        let grad_z_hat = super::linalg::matmul_nn(grad_logits, &cache.w_hat)?;
        let mut grad_z = Matrix::zeros(b, d);
        for i in 0..b {
            let gz = normalize_backward(cache.z_hat.row(i), cache.z_norms[i], grad_z_hat.row(i));
            grad_z.row_mut(i).copy_from_slice(&gz);
        }
        Ok(grad_z)
    }

    /// Logit vector for a single feature vector.
    pub fn logits_one(&self, z: &[f64]) -> Vec<f64> {
        let mut z_hat = z.to_vec();
        normalize_in_place(&mut z_hat);
        self.weight
            .iter_rows()
            .map(|w| {
                let mut w_hat = w.to_vec();
                normalize_in_place(&mut w_hat);
                dot(&w_hat, &z_hat)
            })
            .collect()
    }

    /// Copy whose rows are reordered so that new row `i` is old row `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n_classes() {
            return Err(Error::invalid("permutation length differs from class count"));
        }
        let rows: Vec<&[f64]> = perm.iter().map(|&p| self.weight.row(p)).collect();
        Ok(Self::from_weight(Matrix::from_rows(&rows)?))
    }
}

impl Parameters for CosineClassifier {
    fn params(&self) -> Vec<&[f64]> {
        vec![self.weight.as_slice()]
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.weight.as_mut_slice()]
    }
}

impl Trainable for CosineClassifier {
    fn grads(&self) -> Vec<&[f64]> {
        vec![self.grad.as_slice()]
    }

    fn zero_grad(&mut self) {
        self.grad.as_mut_slice().fill(0.0);
    }

    fn params_and_grads(&mut self) -> Vec<(&mut [f64], &[f64])> {
        vec![(self.weight.as_mut_slice(), self.grad.as_slice())]
    }
}
