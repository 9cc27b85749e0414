//! FIFO store of key embeddings with optional labels.

use std::collections::VecDeque;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numerics::{norm, Matrix};

/// Label carried by unlabeled keys. Never equal to a real class.
pub const UNLABELED: i64 = -1;

const PUSH_NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct QueueEntry {
    pub embedding: Vec<f64>,
    pub label: i64,
}

#[derive(Debug, Clone)]
pub struct FeatureQueue {
    capacity: usize,
    entries: VecDeque<QueueEntry>,
}

/// Immutable copy of the queue contents, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct QueueSnapshot {
    embeddings: Arc<Matrix>,
    labels: Arc<Vec<i64>>,
}

impl QueueSnapshot {
    pub fn empty(dim: usize) -> Self {
        Self { embeddings: Arc::new(Matrix::zeros(0, dim)), labels: Arc::new(Vec::new()) }
    }

    pub fn from_parts(embeddings: Matrix, labels: Vec<i64>) -> Result<Self> {
        if embeddings.rows() != labels.len() {
            return Err(Error::invalid("snapshot embeddings and labels differ in length"));
        }
        Ok(Self { embeddings: Arc::new(embeddings), labels: Arc::new(labels) })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn embeddings(&self) -> &Matrix {
        &self.embeddings
    }

    pub fn embedding(&self, i: usize) -> &[f64] {
        self.embeddings.row(i)
    }

    pub fn labels(&self) -> &[i64] {
        &self.labels
    }

    /// Whether entry `i` is a positive for a query of class `class`.
    pub fn matches(&self, i: usize, class: usize) -> bool {
        let l = self.labels[i];
        l != UNLABELED && l >= 0 && l as usize == class
    }
}

impl FeatureQueue {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::invalid("queue capacity must be >= 1"));
        }
        Ok(Self { capacity, entries: VecDeque::with_capacity(capacity) })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() == self.capacity
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    /// Appends rows of `embeddings` in order, evicting the oldest entries.
    /// The whole batch is rejected if any row is not unit-norm.
    pub fn push_batch(&mut self, embeddings: &Matrix, labels: &[i64]) -> Result<()> {
        if embeddings.rows() != labels.len() {
            return Err(Error::invalid("queue push: embeddings and labels differ in length"));
        }
        for (i, row) in embeddings.iter_rows().enumerate() {
            let n = norm(row);
            if (n - 1.0).abs() > PUSH_NORM_TOLERANCE {
                return Err(Error::invalid(format!("queue push: row {i} has norm {n}, expected 1")));
            }
        }
        if labels.is_empty() {
            return Ok(());
        }
        if let Some(first) = self.entries.front() {
            if first.embedding.len() != embeddings.cols() {
                return Err(Error::invalid("queue push: embedding dimension changed"));
            }
        }
        let skip = labels.len().saturating_sub(self.capacity);
        for (row, &label) in embeddings.iter_rows().zip(labels).skip(skip) {
            if self.entries.len() == self.capacity {
                self.entries.pop_front();
            }
            self.entries.push_back(QueueEntry { embedding: row.to_vec(), label });
        }
        Ok(())
    }

    pub fn snapshot(&self) -> QueueSnapshot {
        let dim = self.entries.front().map(|e| e.embedding.len()).unwrap_or(0);
        let mut data = Vec::with_capacity(self.entries.len() * dim);
        let mut labels = Vec::with_capacity(self.entries.len());
        for e in &self.entries {
            data.extend_from_slice(&e.embedding);
            labels.push(e.label);
        }
        QueueSnapshot {
            embeddings: Arc::new(Matrix::from_vec(labels.len(), dim, data).expect("consistent rows")),
            labels: Arc::new(labels),
        }
    }
}

pub fn push_batch(queue: &mut FeatureQueue, embeddings: &Matrix, labels: &[i64]) -> Result<()> {
    queue.push_batch(embeddings, labels)
}

pub fn snapshot(queue: &FeatureQueue) -> QueueSnapshot {
    queue.snapshot()
}
