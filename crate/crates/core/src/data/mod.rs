//! Embedding datasets, long-tailed split construction, synthetic blobs,
//! two-view augmentation, batching, and the text file format.

mod augment;
mod blobs;
mod io;
mod split;

pub use augment::{iterate_batches, two_views, ViewPair};
pub use blobs::{blob_centers, generate_blobs, BlobSpec};
pub use io::{load_dataset, read_dataset, save_dataset, write_dataset, MAGIC};
pub use split::{make_long_tailed_split, profile_counts, LongTailedSplit, MismatchMode, SplitManifest, SplitSpec};

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{DenseVector, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: u64,
    pub vector: DenseVector,
    pub label: usize,
    pub labeled: bool,
}

/// Samples plus the known/novel class partition. Classes `0..known` are
/// known; `known..known + novel` are novel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingDataset {
    dim: usize,
    known_classes: usize,
    novel_classes: usize,
    samples: Vec<Sample>,
}

impl EmbeddingDataset {
    pub fn new(dim: usize, known_classes: usize, novel_classes: usize, samples: Vec<Sample>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Validation("dimension must be > 0".into()));
        }
        let n_classes = known_classes + novel_classes;
        let mut ids = HashSet::with_capacity(samples.len());
        for s in &samples {
            if s.vector.dim() != dim {
                return Err(Error::Validation(format!(
                    "sample {} has dimension {}, expected {dim}",
                    s.id,
                    s.vector.dim()
                )));
            }
            if s.label >= n_classes {
                return Err(Error::Validation(format!(
                    "sample {} has label {} outside [0, {n_classes})",
                    s.id, s.label
                )));
            }
            if s.labeled && s.label >= known_classes {
                return Err(Error::Validation(format!(
                    "labeled sample {} has novel class {} (known classes: {known_classes})",
                    s.id, s.label
                )));
            }
            if !ids.insert(s.id) {
                return Err(Error::Validation(format!("duplicate sample id {}", s.id)));
            }
        }
        Ok(Self { dim, known_classes, novel_classes, samples })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn known_classes(&self) -> usize {
        self.known_classes
    }

    pub fn novel_classes(&self) -> usize {
        self.novel_classes
    }

    pub fn n_classes(&self) -> usize {
        self.known_classes + self.novel_classes
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn is_known(&self, class: usize) -> bool {
        class < self.known_classes
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for s in &self.samples {
            counts[s.label] += 1;
        }
        counts
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    /// Rows are sample vectors in dataset order.
    pub fn to_matrix(&self) -> Matrix {
        let mut data = Vec::with_capacity(self.samples.len() * self.dim);
        for s in &self.samples {
            data.extend_from_slice(&s.vector);
        }
        Matrix::from_vec(self.samples.len(), self.dim, data).expect("validated dims")
    }

    /// Same class metadata, keeping the samples selected by `keep`.
    pub fn filter(&self, mut keep: impl FnMut(&Sample) -> bool) -> Self {
        Self {
            dim: self.dim,
            known_classes: self.known_classes,
            novel_classes: self.novel_classes,
            samples: self.samples.iter().filter(|s| keep(s)).cloned().collect(),
        }
    }

    pub fn labeled_part(&self) -> Self {
        self.filter(|s| s.labeled)
    }

    pub fn unlabeled_part(&self) -> Self {
        self.filter(|s| !s.labeled)
    }

    /// Concatenation of two datasets that share class metadata.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim
            || self.known_classes != other.known_classes
            || self.novel_classes != other.novel_classes
        {
            return Err(Error::Validation("datasets disagree on dimension or class split".into()));
        }
        let mut samples = self.samples.clone();
        samples.extend(other.samples.iter().cloned());
        Self::new(self.dim, self.known_classes, self.novel_classes, samples)
    }

    /// Reinterprets the class partition; all labels must stay in range.
    pub fn with_partition(&self, known: usize, novel: usize) -> Result<Self> {
        Self::new(self.dim, known, novel, self.samples.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(id: u64, label: usize, labeled: bool) -> Sample {
        Sample { id, vector: DenseVector::new(vec![0.0, 1.0]).unwrap(), label, labeled }
    }

    #[test]
    fn rejects_labeled_novel_samples() {
        let err = EmbeddingDataset::new(2, 1, 1, vec![sample(0, 1, true)]).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
        assert!(EmbeddingDataset::new(2, 1, 1, vec![sample(0, 1, false)]).is_ok());
    }

    #[test]
    fn rejects_duplicate_ids_and_wrong_dims() {
        assert!(EmbeddingDataset::new(2, 2, 0, vec![sample(0, 0, true), sample(0, 1, true)]).is_err());
        assert!(EmbeddingDataset::new(3, 2, 0, vec![sample(0, 0, true)]).is_err());
    }

    #[test]
    fn partitions_and_counts() {
        let ds =
            EmbeddingDataset::new(2, 1, 1, vec![sample(0, 0, true), sample(1, 1, false), sample(2, 0, false)]).unwrap();
        assert_eq!(ds.class_counts(), vec![2, 1]);
        assert_eq!(ds.labeled_part().len(), 1);
        assert_eq!(ds.unlabeled_part().len(), 2);
        assert_eq!(ds.to_matrix().shape(), (3, 2));
    }
}
