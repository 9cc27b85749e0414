use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{EmbeddingDataset, Sample};
use crate::error::{Error, Result};
use crate::numerics::rng::{rng_for, stream};

/// How the unlabeled class prior relates to the labeled one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MismatchMode {
    /// Labeled and unlabeled sets share the head→tail class ordering.
    Mcar,
    /// The unlabeled set uses the reversed ordering.
    Mnar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub known_classes: usize,
    pub novel_classes: usize,
    /// Labeled count of the head class.
    pub n_max: usize,
    pub gamma_l: f64,
    pub gamma_u: f64,
    pub mode: MismatchMode,
    /// Share of a head known class that is labeled; sets the unlabeled head
    /// count to `n_max · (1 − f) / f`.
    #[serde(default = "default_labeled_fraction")]
    pub labeled_fraction: f64,
    /// Balanced held-out samples per class.
    #[serde(default)]
    pub test_per_class: usize,
    pub seed: u64,
}

fn default_labeled_fraction() -> f64 {
    0.5
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if self.known_classes == 0 {
            return Err(Error::invalid("split needs at least one known class"));
        }
        if self.n_max == 0 {
            return Err(Error::invalid("n_max must be >= 1"));
        }
        if !(self.gamma_l >= 1.0) || !(self.gamma_u >= 1.0) {
            return Err(Error::invalid(format!(
                "imbalance ratios must be >= 1, got gamma_l={} gamma_u={}",
                self.gamma_l, self.gamma_u
            )));
        }
        if !(self.labeled_fraction > 0.0 && self.labeled_fraction < 1.0) {
            return Err(Error::invalid(format!("labeled_fraction must lie in (0, 1), got {}", self.labeled_fraction)));
        }
        Ok(())
    }

    pub fn n_classes(&self) -> usize {
        self.known_classes + self.novel_classes
    }

    /// Head count of the unlabeled profile.
    pub fn unlabeled_n_max(&self) -> usize {
        let f = self.labeled_fraction;
        ((self.n_max as f64 * (1.0 - f) / f + 0.5).floor() as usize).max(1)
    }

    /// Labeled count per class (zero for novel classes).
    pub fn labeled_counts(&self) -> Vec<usize> {
        let mut counts = profile_counts(self.n_max, self.gamma_l, self.known_classes);
        counts.resize(self.n_classes(), 0);
        counts
    }

    /// Unlabeled count per class.
    pub fn unlabeled_counts(&self) -> Vec<usize> {
        let c = self.n_classes();
        let by_rank = profile_counts(self.unlabeled_n_max(), self.gamma_u, c);
        (0..c)
            .map(|class| match self.mode {
                MismatchMode::Mcar => by_rank[class],
                MismatchMode::Mnar => by_rank[c - 1 - class],
            })
            .collect()
    }
}

/// Exponential long-tail profile by rank: `round(n_max · γ^(−r/(n−1)))`,
/// rounded half up and clamped to at least one sample.
pub fn profile_counts(n_max: usize, gamma: f64, n: usize) -> Vec<usize> {
    (0..n)
        .map(|r| {
            let exponent = if n > 1 { -(r as f64) / (n - 1) as f64 } else { 0.0 };
            let exact = n_max as f64 * gamma.powf(exponent);
            ((exact + 0.5).floor() as usize).max(1)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub mode: MismatchMode,
    pub gamma_l: f64,
    pub gamma_u: f64,
    pub n_max: usize,
    pub known_classes: usize,
    pub novel_classes: usize,
    pub labeled_counts: Vec<usize>,
    pub unlabeled_counts: Vec<usize>,
    pub test_counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LongTailedSplit {
    pub labeled: EmbeddingDataset,
    pub unlabeled: EmbeddingDataset,
    /// Balanced held-out set drawn from what the train sets left over.
    pub test: EmbeddingDataset,
    pub manifest: SplitManifest,
}

impl LongTailedSplit {
    /// Labeled and unlabeled samples in one training set.
    pub fn train(&self) -> EmbeddingDataset {
        self.labeled.concat(&self.unlabeled).expect("split parts share metadata")
    }
}

/// Draws labeled, unlabeled, and test sets without replacement from `pool`.
pub fn make_long_tailed_split(pool: &EmbeddingDataset, spec: &SplitSpec) -> Result<LongTailedSplit> {
    spec.validate()?;
    let c = spec.n_classes();
    if pool.n_classes() != c {
        return Err(Error::invalid(format!(
            "pool has {} classes but the split asks for {} known + {} novel",
            pool.n_classes(),
            spec.known_classes,
            spec.novel_classes
        )));
    }
    let labeled_counts = spec.labeled_counts();
    let unlabeled_counts = spec.unlabeled_counts();
    let test_counts = vec![spec.test_per_class; c];

    let mut by_class: Vec<Vec<&Sample>> = vec![Vec::new(); c];
    for s in pool.samples() {
        by_class[s.label].push(s);
    }

    let mut labeled = Vec::new();
    let mut unlabeled = Vec::new();
    let mut test = Vec::new();
    for (class, members) in by_class.iter_mut().enumerate() {
        let needed = labeled_counts[class] + unlabeled_counts[class] + test_counts[class];
        if members.len() < needed {
            return Err(Error::Capacity { class, needed, available: members.len() });
        }
        members.sort_by_key(|s| s.id);
        members.shuffle(&mut rng_for(&[stream::SPLIT, spec.seed, class as u64]));
        let (l, rest) = members.split_at(labeled_counts[class]);
        let (u, rest) = rest.split_at(unlabeled_counts[class]);
        let t = &rest[..test_counts[class]];
        labeled.extend(l.iter().map(|s| Sample { labeled: true, ..(*s).clone() }));
        unlabeled.extend(u.iter().map(|s| Sample { labeled: false, ..(*s).clone() }));
        test.extend(t.iter().map(|s| Sample { labeled: false, ..(*s).clone() }));
    }
    for part in [&mut labeled, &mut unlabeled, &mut test] {
        part.sort_by_key(|s| s.id);
    }

    let build = |samples| EmbeddingDataset::new(pool.dim(), spec.known_classes, spec.novel_classes, samples);
    Ok(LongTailedSplit {
        labeled: build(labeled)?,
        unlabeled: build(unlabeled)?,
        test: build(test)?,
        manifest: SplitManifest {
            mode: spec.mode,
            gamma_l: spec.gamma_l,
            gamma_u: spec.gamma_u,
            n_max: spec.n_max,
            known_classes: spec.known_classes,
            novel_classes: spec.novel_classes,
            labeled_counts,
            unlabeled_counts,
            test_counts,
        },
    })
}
