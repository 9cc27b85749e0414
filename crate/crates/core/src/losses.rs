//! Training objectives with exact gradients.
//!
//! Representation losses return gradients with respect to the unit query
//! embeddings; classifier losses return gradients with respect to the student
//! probabilities. The trainer chains them through the networks.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::linalg::{log_sum_exp, matmul_nn, matmul_nt, softmax_unchecked};
use crate::numerics::{dot, softmax_temp, Matrix};
use crate::queue::QueueSnapshot;

const TARGET_SUM_TOLERANCE: f64 = 1e-6;
const FLAT_DENSITY: f64 = 1e-12;

/// Per-anchor temperature interpolated between `tau_min` and `tau_max` by
/// where the anchor's score sits within the current density range.
pub fn dynamic_temperature(score: f64, densities: &[f64], tau_min: f64, tau_max: f64) -> Result<f64> {
    if !(tau_min > 0.0) || !(tau_max >= tau_min) || !tau_max.is_finite() {
        return Err(Error::invalid(format!("need 0 < tau_min <= tau_max, got tau_min={tau_min} tau_max={tau_max}")));
    }
    if densities.is_empty() {
        return Err(Error::invalid("dynamic temperature needs at least one density"));
    }
    let lo = densities.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = densities.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo < FLAT_DENSITY {
        return Ok(0.5 * (tau_min + tau_max));
    }
    if score <= lo {
        return Ok(tau_min);
    }
    if score >= hi {
        return Ok(tau_max);
    }
    let tau = tau_min + (score - lo) / (hi - lo) * (tau_max - tau_min);
    Ok(tau.clamp(tau_min, tau_max))
}

/// InfoNCE against an explicit negative set. The denominator holds the
/// positive and every negative.
pub fn info_nce_with_negatives(h: &[f64], positive: &[f64], negatives: &Matrix, tau: f64) -> Result<(f64, Vec<f64>)> {
    if !(tau > 0.0) {
        return Err(Error::invalid(format!("temperature must be > 0, got {tau}")));
    }
    if h.len() != positive.len() || (negatives.rows() > 0 && negatives.cols() != h.len()) {
        return Err(Error::invalid("info_nce: dimension mismatch"));
    }
    let mut scores = Vec::with_capacity(negatives.rows() + 1);
    scores.push(dot(h, positive) / tau);
    scores.extend(negatives.iter_rows().map(|k| dot(h, k) / tau));
    let lse = log_sum_exp(&scores);
    let loss = lse - scores[0];
    let mut grad: Vec<f64> = positive.iter().map(|v| (((scores[0] - lse).exp()) - 1.0) * v).collect();
    for (k, s) in negatives.iter_rows().zip(&scores[1..]) {
        let w = (s - lse).exp();
        for (g, v) in grad.iter_mut().zip(k) {
            *g += w * v;
        }
    }
    grad.iter_mut().for_each(|g| *g /= tau);
    Ok((loss, grad))
}

/// InfoNCE with the queue as negatives. An empty queue is a state error:
/// callers skip the loss during warmup.
pub fn info_nce(h: &[f64], positive: &[f64], queue: &QueueSnapshot, tau: f64) -> Result<(f64, Vec<f64>)> {
    if queue.is_empty() {
        return Err(Error::State("info_nce needs a non-empty queue".into()));
    }
    info_nce_with_negatives(h, positive, queue.embeddings(), tau)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupConOutput {
    pub loss: f64,
    pub grad: Vec<f64>,
    /// No queue entry shared the anchor's label; loss and gradient are zero.
    pub skipped: bool,
}

/// Supervised contrastive loss with positives mined from the label queue.
/// `label` is the anchor's class, or the unlabeled sentinel which is rejected.
pub fn sup_con(h: &[f64], label: i64, queue: &QueueSnapshot, tau: f64) -> Result<SupConOutput> {
    if label < 0 {
        return Err(Error::invalid("supervised contrastive loss needs a labeled anchor"));
    }
    if !(tau > 0.0) {
        return Err(Error::invalid(format!("temperature must be > 0, got {tau}")));
    }
    let class = label as usize;
    let positives: Vec<usize> = (0..queue.len()).filter(|&i| queue.matches(i, class)).collect();
    if positives.is_empty() {
        return Ok(SupConOutput { loss: 0.0, grad: vec![0.0; h.len()], skipped: true });
    }
    let scores: Vec<f64> = (0..queue.len()).map(|i| dot(h, queue.embedding(i)) / tau).collect();
    let lse = log_sum_exp(&scores);
    let n_pos = positives.len() as f64;
    let loss = lse - positives.iter().map(|&i| scores[i]).sum::<f64>() / n_pos;
    let mut grad = vec![0.0; h.len()];
    for (i, s) in scores.iter().enumerate() {
        let w = (s - lse).exp();
        for (g, v) in grad.iter_mut().zip(queue.embedding(i)) {
            *g += w * v;
        }
    }
    for &i in &positives {
        for (g, v) in grad.iter_mut().zip(queue.embedding(i)) {
            *g -= v / n_pos;
        }
    }
    grad.iter_mut().for_each(|g| *g /= tau);
    Ok(SupConOutput { loss, grad, skipped: false })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepConfig {
    pub lambda_rep: f64,
    pub tau_sup: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepLoss {
    pub l_u_mean: f64,
    pub l_sup_mean: f64,
    pub l_rep: f64,
    /// dL_rep / dh, one row per anchor.
    pub grad: Matrix,
    pub sup_skipped: usize,
}

/// `(1 − λ)·mean(l_u) + λ·mean(l_sup)` over a batch.
///
/// `queries` and `positives` hold one unit embedding per anchor;
/// `temperatures` holds each anchor's InfoNCE temperature; `labels` is the
/// class for labeled anchors. With no labeled anchors the supervised term is
/// zero.
pub fn representation_loss(
    queries: &Matrix,
    positives: &Matrix,
    labels: &[Option<usize>],
    queue: &QueueSnapshot,
    temperatures: &[f64],
    cfg: &RepConfig,
) -> Result<RepLoss> {
    let b = queries.rows();
    if b == 0 {
        return Err(Error::invalid("representation loss on an empty batch"));
    }
    if positives.shape() != queries.shape() || labels.len() != b || temperatures.len() != b {
        return Err(Error::invalid("representation loss: batch shapes differ"));
    }
    if queue.is_empty() {
        return Err(Error::State("representation loss needs a non-empty queue".into()));
    }
    if queue.embeddings().cols() != queries.cols() {
        return Err(Error::invalid("queue and query dimensions differ"));
    }
    if let Some(t) = temperatures.iter().find(|t| !(**t > 0.0)) {
        return Err(Error::invalid(format!("temperature must be > 0, got {t}")));
    }
    if !(cfg.tau_sup > 0.0) {
        return Err(Error::invalid("tau_sup must be > 0"));
    }
    let keys = queue.embeddings();
    let sims = matmul_nt(queries, keys)?;
    let n_q = keys.rows();

    // Per-anchor softmax weights over the queue for both terms, plus the
    // weight on the positive key for the unsupervised term.
    struct Anchor {
        l_u: f64,
        w_u: Vec<f64>,
        w_pos: f64,
        l_sup: Option<f64>,
        w_sup: Vec<f64>,
    }
    let anchors: Vec<Anchor> = (0..b)
        .into_par_iter()
        .map(|i| {
            let tau = temperatures[i];
            let row = sims.row(i);
            let pos = dot(queries.row(i), positives.row(i)) / tau;
            let mut scores = Vec::with_capacity(n_q + 1);
            scores.push(pos);
            scores.extend(row.iter().map(|s| s / tau));
            let lse = log_sum_exp(&scores);
            let w_u: Vec<f64> = scores[1..].iter().map(|s| (s - lse).exp()).collect();
            let w_pos = (pos - lse).exp() - 1.0;

            let (l_sup, w_sup) = match labels[i] {
                Some(class) => {
                    let pos_idx: Vec<usize> = (0..n_q).filter(|&j| queue.matches(j, class)).collect();
                    if pos_idx.is_empty() {
                        (None, Vec::new())
                    } else {
                        let s: Vec<f64> = row.iter().map(|v| v / cfg.tau_sup).collect();
                        let lse_s = log_sum_exp(&s);
                        let inv = 1.0 / pos_idx.len() as f64;
                        let mean_pos = pos_idx.iter().map(|&j| s[j]).sum::<f64>() * inv;
                        let mut w: Vec<f64> = s.iter().map(|v| (v - lse_s).exp()).collect();
                        for &j in &pos_idx {
                            w[j] -= inv;
                        }
                        (Some(lse_s - mean_pos), w)
                    }
                }
                None => (None, Vec::new()),
            };
            Anchor { l_u: lse - pos, w_u, w_pos, l_sup, w_sup }
        })
        .collect();

    let n_l = labels.iter().filter(|l| l.is_some()).count();
    let lam = cfg.lambda_rep;
    let scale_u = (1.0 - lam) / b as f64;
    let scale_sup = if n_l > 0 { lam / n_l as f64 } else { 0.0 };

    // Combined weights on queue entries, then one matmul for the gradient.
    let mut w = Matrix::zeros(b, n_q);
    let mut l_u_sum = 0.0;
    let mut l_sup_sum = 0.0;
    let mut skipped = 0;
    for (i, a) in anchors.iter().enumerate() {
        l_u_sum += a.l_u;
        let tau = temperatures[i];
        let row = w.row_mut(i);
        for (dst, wu) in row.iter_mut().zip(&a.w_u) {
            *dst = scale_u * wu / tau;
        }
        match a.l_sup {
            Some(l) => {
                l_sup_sum += l;
                for (dst, ws) in row.iter_mut().zip(&a.w_sup) {
                    *dst += scale_sup * ws / cfg.tau_sup;
                }
            }
            None if labels[i].is_some() => skipped += 1,
            None => {}
        }
    }
    let mut grad = matmul_nn(&w, keys)?;
    for (i, a) in anchors.iter().enumerate() {
        let coef = scale_u * a.w_pos / temperatures[i];
        for (g, v) in grad.row_mut(i).iter_mut().zip(positives.row(i)) {
            *g += coef * v;
        }
    }

    let l_u_mean = l_u_sum / b as f64;
    let l_sup_mean = if n_l > 0 { l_sup_sum / n_l as f64 } else { 0.0 };
    Ok(RepLoss { l_u_mean, l_sup_mean, l_rep: (1.0 - lam) * l_u_mean + lam * l_sup_mean, grad, sup_skipped: skipped })
}

/// Teacher distribution: `softmax((logits + λ_var·u) / τ_t)`. Nothing flows
/// back through it.
pub fn soft_pseudo_label(logits: &[f64], uncertainty: &[f64], lambda_var: f64, tau_t: f64) -> Result<Vec<f64>> {
    if logits.len() != uncertainty.len() {
        return Err(Error::invalid(format!(
            "pseudo-label: {} logits but {} uncertainty entries",
            logits.len(),
            uncertainty.len()
        )));
    }
    let adjusted: Vec<f64> = logits.iter().zip(uncertainty).map(|(l, u)| l + lambda_var * u).collect();
    softmax_temp(&adjusted, tau_t)
}

/// Shannon entropy of the mean prediction over both views, weighted by
/// `−ε`, with gradients for each probability row.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyTerm {
    pub entropy: f64,
    /// `−ε · entropy`
    pub value: f64,
    pub grad_a: Matrix,
    pub grad_b: Matrix,
}

pub fn entropy_regularizer(p_a: &Matrix, p_b: &Matrix, epsilon: f64) -> Result<EntropyTerm> {
    if p_a.shape() != p_b.shape() || p_a.rows() == 0 {
        return Err(Error::invalid("entropy regularizer: probability shapes differ or are empty"));
    }
    let (b, c) = p_a.shape();
    let denom = 2.0 * b as f64;
    let mut mean = vec![0.0; c];
    for i in 0..b {
        for (m, (x, y)) in mean.iter_mut().zip(p_a.row(i).iter().zip(p_b.row(i))) {
            *m += x + y;
        }
    }
    mean.iter_mut().for_each(|m| *m /= denom);
    let entropy: f64 = -mean.iter().filter(|m| **m > 0.0).map(|m| m * m.ln()).sum::<f64>();
    // d(−ε·H)/dp̄_k = ε (ln p̄_k + 1), and dp̄/dp = 1 / (2B)
    let per_class: Vec<f64> = mean.iter().map(|m| epsilon * (m.ln() + 1.0) / denom).collect();
    let mut grad = Matrix::zeros(b, c);
    for i in 0..b {
        grad.row_mut(i).copy_from_slice(&per_class);
    }
    Ok(EntropyTerm { entropy, value: -epsilon * entropy, grad_a: grad.clone(), grad_b: grad })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClsLoss {
    /// Mean cross-entropy over both views.
    pub l_cls_mean: f64,
    pub entropy: f64,
    /// `l_cls_mean − ε·entropy`
    pub l_cls: f64,
    pub grad_a: Matrix,
    pub grad_b: Matrix,
}

fn check_targets(t: &Matrix) -> Result<()> {
    for (i, row) in t.iter_rows().enumerate() {
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > TARGET_SUM_TOLERANCE || row.iter().any(|v| *v < 0.0 || !v.is_finite()) {
            return Err(Error::invalid(format!("target row {i} is not a distribution (sum {s})")));
        }
    }
    Ok(())
}

/// Symmetrized self-distillation loss. `targets_a` supervises `p_a` and
/// `targets_b` supervises `p_b`.
pub fn classifier_loss(
    p_a: &Matrix,
    p_b: &Matrix,
    targets_a: &Matrix,
    targets_b: &Matrix,
    epsilon: f64,
) -> Result<ClsLoss> {
    if p_a.shape() != targets_a.shape() || p_b.shape() != targets_b.shape() {
        return Err(Error::invalid("classifier loss: probability and target shapes differ"));
    }
    check_targets(targets_a)?;
    check_targets(targets_b)?;
    let reg = entropy_regularizer(p_a, p_b, epsilon)?;
    let denom = 2.0 * p_a.rows() as f64;
    let mut ce = 0.0;
    let mut grad_a = reg.grad_a;
    let mut grad_b = reg.grad_b;
    for (p, t, g) in [(p_a, targets_a, &mut grad_a), (p_b, targets_b, &mut grad_b)] {
        for i in 0..p.rows() {
            for ((pk, tk), gk) in p.row(i).iter().zip(t.row(i)).zip(g.row_mut(i)) {
                if *tk != 0.0 {
                    ce -= tk * pk.ln();
                    *gk -= tk / (pk * denom);
                }
            }
        }
    }
    let l_cls_mean = ce / denom;
    Ok(ClsLoss { l_cls_mean, entropy: reg.entropy, l_cls: l_cls_mean + reg.value, grad_a, grad_b })
}

/// Row-wise temperature softmax.
pub fn softmax_rows(logits: &Matrix, tau: f64) -> Matrix {
    let mut out = logits.clone();
    for i in 0..out.rows() {
        let p = softmax_unchecked(logits.row(i), tau);
        out.row_mut(i).copy_from_slice(&p);
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_u: f64,
    pub l_sup: f64,
    pub l_rep: f64,
    pub l_cls: f64,
    pub entropy: f64,
    pub loss_cls: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn fields(&self) -> [(&'static str, f64); 7] {
        [
            ("l_u", self.l_u),
            ("l_sup", self.l_sup),
            ("l_rep", self.l_rep),
            ("l_cls", self.l_cls),
            ("entropy", self.entropy),
            ("loss_cls", self.loss_cls),
            ("total", self.total),
        ]
    }

    pub fn first_non_finite(&self) -> Option<&'static str> {
        self.fields().into_iter().find(|(_, v)| !v.is_finite()).map(|(n, _)| n)
    }
}

/// Combines the two halves of the objective. A missing representation term
/// (queue warmup) counts as zero.
pub fn total_loss(rep: Option<&RepLoss>, cls: &ClsLoss) -> LossBreakdown {
    let (l_u, l_sup, l_rep) = rep.map(|r| (r.l_u_mean, r.l_sup_mean, r.l_rep)).unwrap_or_default();
    LossBreakdown {
        l_u,
        l_sup,
        l_rep,
        l_cls: cls.l_cls_mean,
        entropy: cls.entropy,
        loss_cls: cls.l_cls,
        total: l_rep + cls.l_cls,
    }
}
