//! A small fully connected network with hand-derived gradients.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::linalg::{matmul_nn, matmul_nt, matmul_tn, Matrix};
use crate::error::{Error, Result};

/// Read access to a module's parameter tensors in a fixed order.
pub trait Parameters {
    fn params(&self) -> Vec<&[f64]>;
    fn params_mut(&mut self) -> Vec<&mut [f64]>;
}

/// A module whose gradient buffers mirror its parameters tensor for tensor.
pub trait Trainable: Parameters {
    fn grads(&self) -> Vec<&[f64]>;
    fn zero_grad(&mut self);
    /// Parameter tensors paired with their gradient buffers.
    fn params_and_grads(&mut self) -> Vec<(&mut [f64], &[f64])>;
}

/// `y = W x + b` with `W: out × in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Affine {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self { weight: Matrix::zeros(output, input), bias: vec![0.0; output] }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.rows()
    }
}

/// Affine layers with ReLU between consecutive layers (none after the last).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmallNet {
    layers: Vec<Affine>,
    grads: Vec<Affine>,
}

/// Activations saved by [`SmallNet::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct NetCache {
    /// Input to each layer (post-activation of the previous one).
    inputs: Vec<Matrix>,
    /// Pre-activation output of each layer.
    pre: Vec<Matrix>,
}

impl SmallNet {
    /// Kaiming-normal weights and zero biases. `dims` lists every layer
    /// width including input and output, so it needs at least two entries.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::invalid(format!("network dims must have >= 2 positive entries, got {dims:?}")));
        }
        let n_layers = dims.len() - 1;
        let mut layers = Vec::with_capacity(n_layers);
        for (l, w) in dims.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let gain = if l + 1 < n_layers { 2.0 } else { 1.0 };
            let normal = Normal::new(0.0, (gain / fan_in as f64).sqrt()).expect("positive std");
            let mut layer = Affine::zeros(fan_in, fan_out);
            for v in layer.weight.as_mut_slice() {
                *v = normal.sample(rng);
            }
            layers.push(layer);
        }
        Self::from_layers(layers)
    }

    pub fn from_layers(layers: Vec<Affine>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("network needs at least one layer"));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::invalid(format!(
                    "layer {i} outputs {} but layer {} expects {}",
                    pair[0].output_dim(),
                    i + 1,
                    pair[1].input_dim()
                )));
            }
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.output_dim() {
                return Err(Error::invalid(format!("layer {i}: bias length mismatch")));
            }
        }
        let grads = layers.iter().map(|l| Affine::zeros(l.input_dim(), l.output_dim())).collect();
        Ok(Self { layers, grads })
    }

    pub fn layers(&self) -> &[Affine] {
        &self.layers
    }

    pub fn grad_layers(&self) -> &[Affine] {
        &self.grads
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    /// Layer widths, input first.
    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim()];
        dims.extend(self.layers.iter().map(Affine::output_dim));
        dims
    }

    /// Forward pass over a batch (`rows = samples`).
    pub fn forward(&self, input: &Matrix) -> Result<(Matrix, NetCache)> {
        if input.cols() != self.input_dim() {
            return Err(Error::invalid(format!(
                "network expects input dim {}, got {}",
                self.input_dim(),
                input.cols()
            )));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut current = input.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut y = matmul_nt(&current, &layer.weight)?;
            for r in 0..y.rows() {
                for (v, b) in y.row_mut(r).iter_mut().zip(&layer.bias) {
                    *v += b;
                }
            }
            inputs.push(current);
            let next = if l + 1 < self.layers.len() {
                let mut a = y.clone();
                a.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0));
                a
            } else {
                y.clone()
            };
            pre.push(y);
            current = next;
        }
        Ok((current, NetCache { inputs, pre }))
    }

    /// Forward pass without keeping activations.
    pub fn infer(&self, input: &Matrix) -> Result<Matrix> {
        self.forward(input).map(|(out, _)| out)
    }

    /// Accumulates parameter gradients for upstream gradient `grad_out` and
    /// returns the gradient with respect to the batch input.
    pub fn backward(&mut self, cache: &NetCache, grad_out: &Matrix) -> Result<Matrix> {
        let last = self.layers.len() - 1;
        let out_shape = cache.pre[last].shape();
        if grad_out.shape() != out_shape {
            return Err(Error::invalid(format!(
                "upstream gradient shape {:?} does not match output {:?}",
                grad_out.shape(),
                out_shape
            )));
        }
        let mut grad = grad_out.clone();
        for l in (0..self.layers.len()).rev() {
            if l < last {
                // ReLU sits between layer l and l + 1
                for (g, y) in grad.as_mut_slice().iter_mut().zip(cache.pre[l].as_slice()) {
                    if *y <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            let dw = matmul_tn(&grad, &cache.inputs[l])?;
            let gl = &mut self.grads[l];
            for (acc, v) in gl.weight.as_mut_slice().iter_mut().zip(dw.as_slice()) {
                *acc += v;
            }
            for r in 0..grad.rows() {
                for (acc, v) in gl.bias.iter_mut().zip(grad.row(r)) {
                    *acc += v;
                }
            }
            grad = matmul_nn(&grad, &self.layers[l].weight)?;
        }
        Ok(grad)
    }

    /// Single-sample forward and backward pass.
    pub fn forward_backward(&mut self, input: &[f64], upstream: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let x = Matrix::from_vec(1, input.len(), input.to_vec())?;
        let (out, cache) = self.forward(&x)?;
        let g = Matrix::from_vec(1, upstream.len(), upstream.to_vec())?;
        let gin = self.backward(&cache, &g)?;
        Ok((out.into_vec(), gin.into_vec()))
    }

    pub fn all_finite(&self) -> bool {
        self.params().iter().chain(self.grads().iter()).all(|t| t.iter().all(|v| v.is_finite()))
    }
}

impl Parameters for SmallNet {
    fn params(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()]).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers.iter_mut().flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()]).collect()
    }
}

impl Trainable for SmallNet {
    fn grads(&self) -> Vec<&[f64]> {
        self.grads.iter().flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()]).collect()
    }

    fn zero_grad(&mut self) {
        for g in &mut self.grads {
            g.weight.as_mut_slice().fill(0.0);
            g.bias.fill(0.0);
        }
    }

    fn params_and_grads(&mut self) -> Vec<(&mut [f64], &[f64])> {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for (l, g) in self.layers.iter_mut().zip(&self.grads) {
            out.push((l.weight.as_mut_slice(), g.weight.as_slice()));
            out.push((l.bias.as_mut_slice(), g.bias.as_slice()));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng::rng_for;

    fn loss_of(net: &SmallNet, x: &[f64], up: &[f64]) -> f64 {
        let m = Matrix::from_vec(1, x.len(), x.to_vec()).unwrap();
        let out = net.infer(&m).unwrap();
        out.as_slice().iter().zip(up).map(|(a, b)| a * b).sum()
    }

    #[test]
    fn single_affine_is_linear() {
        let w = Matrix::from_rows(&[[1.0, 2.0], [0.5, -1.0], [0.0, 3.0]]).unwrap();
        let mut net = SmallNet::from_layers(vec![Affine { weight: w, bias: vec![0.1, 0.2, 0.3] }]).unwrap();
        let (out, gin) = net.forward_backward(&[2.0, 1.0], &[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(out, vec![4.1, 0.2, 3.3]);
        assert_eq!(gin, vec![1.0, 2.0]);
        assert_eq!(net.grads()[0], &[2.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(net.grads()[1], &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn zero_upstream_accumulates_nothing() {
        let mut rng = rng_for(&[1]);
        let mut net = SmallNet::new(&[4, 5, 3], &mut rng).unwrap();
        net.forward_backward(&[0.3, -0.2, 0.9, 1.0], &[0.0; 3]).unwrap();
        assert!(net.grads().iter().all(|g| g.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut rng = rng_for(&[2]);
        let mut net = SmallNet::new(&[4, 3], &mut rng).unwrap();
        assert!(net.forward_backward(&[1.0; 3], &[0.0; 3]).is_err());
        assert!(net.forward_backward(&[1.0; 4], &[0.0; 2]).is_err());
    }

    #[test]
    fn two_layer_gradients_match_central_differences() {
        let h = 1e-5;
        for seed in 0..5u64 {
            let mut rng = rng_for(&[seed, 99]);
            let mut net = SmallNet::new(&[8, 8, 8], &mut rng).unwrap();
            let normal = Normal::new(0.0, 1.0).unwrap();
            let x: Vec<f64> = (0..8).map(|_| normal.sample(&mut rng)).collect();
            let up: Vec<f64> = (0..8).map(|_| normal.sample(&mut rng)).collect();
            let (_, gin) = net.forward_backward(&x, &up).unwrap();
            let analytic: Vec<Vec<f64>> = net.grads().iter().map(|g| g.to_vec()).collect();
            let n_tensors = analytic.len();
            for t in 0..n_tensors {
                for i in 0..analytic[t].len() {
                    let orig = net.params()[t][i];
                    net.params_mut()[t][i] = orig + h;
                    let plus = loss_of(&net, &x, &up);
                    net.params_mut()[t][i] = orig - h;
                    let minus = loss_of(&net, &x, &up);
                    net.params_mut()[t][i] = orig;
                    let numeric = (plus - minus) / (2.0 * h);
                    let a = analytic[t][i];
                    let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
                    assert!(rel < 1e-6, "tensor {t} entry {i}: analytic {a} numeric {numeric}");
                }
            }
            for i in 0..8 {
                let mut xp = x.clone();
                xp[i] += h;
                let mut xm = x.clone();
                xm[i] -= h;
                let numeric = (loss_of(&net, &xp, &up) - loss_of(&net, &xm, &up)) / (2.0 * h);
                assert!((gin[i] - numeric).abs() < 1e-6 * numeric.abs().max(1.0));
            }
        }
    }
}
