//! Query and key networks plus the differentiable part of the objective.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{
    classifier_loss, representation_loss, softmax_rows, total_loss, ClsLoss, LossBreakdown, RepConfig,
};
use crate::numerics::linalg::normalize_backward;
use crate::numerics::{
    argmax, ema_params, softmax_temp_backward, CosineClassifier, Matrix, Parameters, SmallNet, Trainable,
};
use crate::queue::QueueSnapshot;

/// Encoder `E`, projection head `g`, and classifier head `f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub encoder: SmallNet,
    pub projector: SmallNet,
    pub classifier: CosineClassifier,
}

/// EMA copies of the query encoder and projector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyNetwork {
    pub encoder: SmallNet,
    pub projector: SmallNet,
}

/// Everything the objective needs besides the parameters. Targets,
/// temperatures, and keys are treated as constants.
#[derive(Debug, Clone, Copy)]
pub struct ObjectiveInputs<'a> {
    pub view_a: &'a Matrix,
    pub view_b: &'a Matrix,
    pub labels: &'a [Option<usize>],
    /// Positive key for each anchor.
    pub keys: &'a Matrix,
    /// `None` or empty skips the representation term.
    pub queue: Option<&'a QueueSnapshot>,
    pub temperatures: &'a [f64],
    /// Supervises the predictions on `view_a`.
    pub targets_a: &'a Matrix,
    pub targets_b: &'a Matrix,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveConfig {
    pub rep: RepConfig,
    pub tau_s: f64,
    pub epsilon: f64,
    pub use_representation: bool,
    pub use_classifier: bool,
}

fn normalized_rows(m: &Matrix) -> (Matrix, Vec<f64>) {
    let mut out = m.clone();
    let norms = out.normalize_rows();
    (out, norms)
}

fn add_into(dst: &mut Matrix, src: &Matrix) {
    for (d, s) in dst.as_mut_slice().iter_mut().zip(src.as_slice()) {
        *d += s;
    }
}

impl Model {
    pub fn features(&self, x: &Matrix) -> Result<Matrix> {
        self.encoder.infer(x)
    }

    /// Unit-norm projector output.
    pub fn project(&self, x: &Matrix) -> Result<Matrix> {
        let z = self.encoder.infer(x)?;
        Ok(normalized_rows(&self.projector.infer(&z)?).0)
    }

    pub fn logits(&self, x: &Matrix) -> Result<Matrix> {
        self.classifier.logits(&self.encoder.infer(x)?)
    }

    /// Argmax head per row, considering only heads with `mask[k] = true`
    /// when a mask is given.
    pub fn predict(&self, x: &Matrix, mask: Option<&[bool]>) -> Result<Vec<usize>> {
        let logits = self.logits(x)?;
        Ok(logits
            .iter_rows()
            .map(|row| match mask {
                None => argmax(row),
                Some(mask) => {
                    let masked: Vec<f64> =
                        row.iter().zip(mask).map(|(v, on)| if *on { *v } else { f64::NEG_INFINITY }).collect();
                    argmax(&masked)
                }
            })
            .collect())
    }

    pub fn all_finite(&self) -> bool {
        self.params().iter().all(|p| p.iter().all(|v| v.is_finite()))
    }

    /// Evaluates the loss and leaves its gradient in the gradient buffers,
    /// which are cleared first.
    pub fn objective(&mut self, inp: &ObjectiveInputs<'_>, cfg: &ObjectiveConfig) -> Result<LossBreakdown> {
        self.zero_grad();
        let b = inp.view_a.rows();
        if b == 0 || inp.view_b.rows() != b || inp.labels.len() != b {
            return Err(Error::invalid("objective: batch shapes differ or are empty"));
        }
        let (za, cache_a) = self.encoder.forward(inp.view_a)?;
        let (zb, cache_b) = self.encoder.forward(inp.view_b)?;
        let mut grad_za = Matrix::zeros(za.rows(), za.cols());
        let mut grad_zb = Matrix::zeros(zb.rows(), zb.cols());

        let queue = inp.queue.filter(|q| !q.is_empty());
        let rep = match queue {
            Some(queue) if cfg.use_representation => {
                let (h_raw, pcache) = self.projector.forward(&za)?;
                let (h, norms) = normalized_rows(&h_raw);
                let r = representation_loss(&h, inp.keys, inp.labels, queue, inp.temperatures, &cfg.rep)?;
                let mut grad_raw = Matrix::zeros(h.rows(), h.cols());
                for i in 0..h.rows() {
                    let g = normalize_backward(h.row(i), norms[i], r.grad.row(i));
                    grad_raw.row_mut(i).copy_from_slice(&g);
                }
                let g = self.projector.backward(&pcache, &grad_raw)?;
                add_into(&mut grad_za, &g);
                Some(r)
            }
            _ => None,
        };

        let cls = if cfg.use_classifier {
            let (la, ca) = self.classifier.forward(&za)?;
            let (lb, cb) = self.classifier.forward(&zb)?;
            let pa = softmax_rows(&la, cfg.tau_s);
            let pb = softmax_rows(&lb, cfg.tau_s);
            let c = classifier_loss(&pa, &pb, inp.targets_a, inp.targets_b, cfg.epsilon)?;
            for (p, gp, cache, gz) in [(&pa, &c.grad_a, &ca, &mut grad_za), (&pb, &c.grad_b, &cb, &mut grad_zb)] {
                let mut gl = Matrix::zeros(p.rows(), p.cols());
                for i in 0..p.rows() {
                    let g = softmax_temp_backward(p.row(i), gp.row(i), cfg.tau_s);
                    gl.row_mut(i).copy_from_slice(&g);
                }
                let g = self.classifier.backward(cache, &gl)?;
                add_into(gz, &g);
            }
            c
        } else {
            ClsLoss {
                l_cls_mean: 0.0,
                entropy: 0.0,
                l_cls: 0.0,
                grad_a: Matrix::zeros(0, 0),
                grad_b: Matrix::zeros(0, 0),
            }
        };

        self.encoder.backward(&cache_a, &grad_za)?;
        self.encoder.backward(&cache_b, &grad_zb)?;
        Ok(total_loss(rep.as_ref(), &cls))
    }
}

impl Parameters for Model {
    fn params(&self) -> Vec<&[f64]> {
        let mut out = self.encoder.params();
        out.extend(self.projector.params());
        out.extend(self.classifier.params());
        out
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.encoder.params_mut();
        out.extend(self.projector.params_mut());
        out.extend(self.classifier.params_mut());
        out
    }
}

impl Trainable for Model {
    fn grads(&self) -> Vec<&[f64]> {
        let mut out = self.encoder.grads();
        out.extend(self.projector.grads());
        out.extend(self.classifier.grads());
        out
    }

    fn zero_grad(&mut self) {
        self.encoder.zero_grad();
        self.projector.zero_grad();
        self.classifier.zero_grad();
    }

    fn params_and_grads(&mut self) -> Vec<(&mut [f64], &[f64])> {
        let mut out = self.encoder.params_and_grads();
        out.extend(self.projector.params_and_grads());
        out.extend(self.classifier.params_and_grads());
        out
    }
}

impl KeyNetwork {
    pub fn from_model(model: &Model) -> Self {
        Self { encoder: model.encoder.clone(), projector: model.projector.clone() }
    }

    /// Unit-norm key embeddings.
    pub fn embed(&self, x: &Matrix) -> Result<Matrix> {
        let z = self.encoder.infer(x)?;
        Ok(normalized_rows(&self.projector.infer(&z)?).0)
    }

    pub fn follow(&mut self, model: &Model, momentum: f64) -> Result<()> {
        ema_params(&mut self.encoder, &model.encoder, momentum)?;
        ema_params(&mut self.projector, &model.projector, momentum)
    }
}

impl Parameters for KeyNetwork {
    fn params(&self) -> Vec<&[f64]> {
        let mut out = self.encoder.params();
        out.extend(self.projector.params());
        out
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.encoder.params_mut();
        out.extend(self.projector.params_mut());
        out
    }
}
