//! Density-based tailedness estimation over the key queue.
//!
//! Prototypes summarize the queue; each prototype's density is a rank-weighted
//! mean cosine similarity to its `K` nearest queue entries, and a sample's
//! tailedness score is the density of its nearest prototype. Per-class spread
//! of those scores gives the class-uncertainty vector.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{argmax, dot, kmeans, normalize_in_place, Matrix};
use crate::queue::QueueSnapshot;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrototypeBank {
    prototypes: Matrix,
    densities: Vec<f64>,
    densities_fresh: bool,
}

impl PrototypeBank {
    /// Rebuilds a bank from stored prototypes and densities.
    pub fn from_parts(prototypes: Matrix, densities: Vec<f64>) -> Result<Self> {
        if densities.len() != prototypes.rows() && !densities.is_empty() {
            return Err(Error::invalid("one density per prototype expected"));
        }
        let fresh = !densities.is_empty();
        Ok(Self { prototypes, densities, densities_fresh: fresh })
    }

    pub fn len(&self) -> usize {
        self.prototypes.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.prototypes.rows() == 0
    }

    pub fn prototypes(&self) -> &Matrix {
        &self.prototypes
    }

    /// Current densities, or a state error when they are stale.
    pub fn densities(&self) -> Result<&[f64]> {
        if self.densities_fresh {
            Ok(&self.densities)
        } else {
            Err(Error::State("prototype densities are stale; refresh them against the queue".into()))
        }
    }

    pub fn has_fresh_densities(&self) -> bool {
        self.densities_fresh
    }

    pub fn refresh_densities(&mut self, queue: &QueueSnapshot, k: usize) -> Result<()> {
        self.densities = knn_density(self, queue, k)?;
        self.densities_fresh = true;
        Ok(())
    }

    pub fn invalidate_densities(&mut self) {
        self.densities_fresh = false;
    }

    /// Index of the most similar prototype; ties go to the lower index.
    pub fn nearest(&self, key: &[f64]) -> usize {
        let sims: Vec<f64> = self.prototypes.iter_rows().map(|m| dot(m, key)).collect();
        argmax(&sims)
    }
}

/// k-means on the queue embeddings with unit-normalized centroids.
pub fn init_prototypes(queue: &QueueSnapshot, m: usize, seed: u64) -> Result<PrototypeBank> {
    if m == 0 {
        return Err(Error::invalid("need at least one prototype"));
    }
    if queue.len() < m {
        return Err(Error::Precondition(format!(
            "queue holds {} entries but {m} prototypes were requested",
            queue.len()
        )));
    }
    let result = kmeans(queue.embeddings(), m, seed)?;
    let mut prototypes = result.centroids;
    prototypes.normalize_rows();
    Ok(PrototypeBank { prototypes, densities: Vec::new(), densities_fresh: false })
}

/// Rank-weighted mean similarity of each prototype to its `k` nearest queue
/// entries. The nearest neighbour weighs `k`, the farthest `1`; equal
/// similarities rank the older entry first.
pub fn knn_density(bank: &PrototypeBank, queue: &QueueSnapshot, k: usize) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::invalid("K must be >= 1"));
    }
    if queue.len() < k {
        return Err(Error::Precondition(format!(
            "density needs K = {k} neighbours but the queue holds {}",
            queue.len()
        )));
    }
    let weight_sum = (k * (k + 1)) as f64 / 2.0;
    let densities = (0..bank.len())
        .into_par_iter()
        .map(|j| {
            let m = bank.prototypes.row(j);
            let mut sims: Vec<(f64, usize)> = (0..queue.len()).map(|i| (dot(m, queue.embedding(i)), i)).collect();
            let order = |a: &(f64, usize), b: &(f64, usize)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
            if k < sims.len() {
                sims.select_nth_unstable_by(k - 1, order);
                sims.truncate(k);
            }
            sims.sort_by(order);
            let mut acc = 0.0;
            for (rank, (s, _)) in sims.iter().enumerate() {
                acc += (k - rank) as f64 * s;
            }
            (acc / weight_sum).clamp(-1.0, 1.0)
        })
        .collect();
    Ok(densities)
}

/// Density of each key's nearest prototype.
pub fn tailedness_scores(keys: &Matrix, bank: &PrototypeBank) -> Result<Vec<f64>> {
    if bank.is_empty() {
        return Err(Error::State("prototype bank is not initialized".into()));
    }
    let densities = bank.densities()?;
    Ok(keys.iter_rows().map(|b| densities[bank.nearest(b)]).collect())
}

/// Moves each prototype toward the mean of the queue entries nearest to it,
/// then recomputes densities with `k` neighbours.
pub fn update_prototypes(bank: &mut PrototypeBank, queue: &QueueSnapshot, lambda_tail: f64, k: usize) -> Result<()> {
    if bank.is_empty() {
        return Err(Error::State("prototype bank is not initialized".into()));
    }
    if !(0.0..=1.0).contains(&lambda_tail) {
        return Err(Error::invalid(format!("lambda_tail must be in [0, 1], got {lambda_tail}")));
    }
    let (m, d) = bank.prototypes.shape();
    let mut sums = Matrix::zeros(m, d);
    let mut counts = vec![0usize; m];
    for i in 0..queue.len() {
        let b = queue.embedding(i);
        let j = bank.nearest(b);
        counts[j] += 1;
        for (s, v) in sums.row_mut(j).iter_mut().zip(b) {
            *s += v;
        }
    }
    for j in 0..m {
        // renormalizing an unchanged row could still flip its last bits
        if counts[j] == 0 || lambda_tail == 1.0 {
            continue;
        }
        let inv = 1.0 / counts[j] as f64;
        let mean: Vec<f64> = sums.row(j).iter().map(|v| v * inv).collect();
        let row = bank.prototypes.row_mut(j);
        for (p, mu) in row.iter_mut().zip(&mean) {
            *p = lambda_tail * *p + (1.0 - lambda_tail) * mu;
        }
        normalize_in_place(row);
    }
    bank.invalidate_densities();
    if queue.len() >= k {
        bank.refresh_densities(queue, k)?;
    }
    Ok(())
}

/// Per-class bounded FIFO of tailedness scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassTailQueues {
    cap: usize,
    queues: Vec<VecDeque<f64>>,
}

impl ClassTailQueues {
    pub fn new(n_classes: usize, cap: usize) -> Result<Self> {
        if cap == 0 {
            return Err(Error::invalid("class tail queue cap must be >= 1"));
        }
        Ok(Self { cap, queues: vec![VecDeque::with_capacity(cap); n_classes] })
    }

    pub fn from_parts(cap: usize, queues: Vec<Vec<f64>>) -> Result<Self> {
        let mut q = Self::new(queues.len(), cap)?;
        for (dst, src) in q.queues.iter_mut().zip(queues) {
            if src.len() > cap {
                return Err(Error::invalid("stored class tail queue exceeds its cap"));
            }
            dst.extend(src);
        }
        Ok(q)
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn n_classes(&self) -> usize {
        self.queues.len()
    }

    pub fn scores(&self, class: usize) -> Vec<f64> {
        self.queues[class].iter().copied().collect()
    }

    /// Appends `scores[i]` to the queue of `labels[i]`.
    pub fn update(&mut self, scores: &[f64], labels: &[usize]) -> Result<()> {
        if scores.len() != labels.len() {
            return Err(Error::invalid("scores and labels differ in length"));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= self.queues.len()) {
            return Err(Error::invalid(format!("label {bad} outside [0, {})", self.queues.len())));
        }
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::invalid(format!("tailedness score {i} is not finite")));
        }
        for (&s, &l) in scores.iter().zip(labels) {
            let q = &mut self.queues[l];
            if q.len() == self.cap {
                q.pop_front();
            }
            q.push_back(s);
        }
        Ok(())
    }
}

pub fn update_class_tail_queues(queues: &mut ClassTailQueues, scores: &[f64], labels: &[usize]) -> Result<()> {
    queues.update(scores, labels)
}

/// Per-class spread of tailedness scores, tagged with the iteration that
/// produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyVector {
    pub values: Vec<f64>,
    pub iteration: u64,
}

impl UncertaintyVector {
    pub fn zeros(n_classes: usize) -> Self {
        Self { values: vec![0.0; n_classes], iteration: 0 }
    }
}

fn population_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    var.sqrt()
}

/// Population standard deviation of each class queue; zero for fewer than
/// two scores.
pub fn class_uncertainty(queues: &ClassTailQueues, iteration: u64) -> UncertaintyVector {
    let values = queues
        .queues
        .iter()
        .map(|q| {
            let (a, b) = q.as_slices();
            if b.is_empty() {
                population_std(a)
            } else {
                population_std(&q.iter().copied().collect::<Vec<_>>())
            }
        })
        .collect();
    UncertaintyVector { values, iteration }
}
