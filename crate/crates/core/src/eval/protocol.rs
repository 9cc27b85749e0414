use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{apply_matching, clustering_accuracy, group_metrics, per_class_recall, ClusterMatch, GroupScores};
use crate::data::EmbeddingDataset;
use crate::error::{Error, Result};
use crate::numerics::kmeans;
use crate::numerics::rng::{mix_seed, stream};
use crate::trainer::TrainerState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalSet {
    TrainUnlabeled,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EvalProtocol {
    pub set: EvalSet,
    pub recluster: bool,
    pub rematch: bool,
}

impl EvalProtocol {
    pub const TRAIN: Self = Self { set: EvalSet::TrainUnlabeled, recluster: false, rematch: false };
    pub const TEST_RECLUSTER: Self = Self { set: EvalSet::Test, recluster: true, rematch: true };
    pub const TEST_REMATCH: Self = Self { set: EvalSet::Test, recluster: false, rematch: true };
    pub const TEST_INDUCTIVE: Self = Self { set: EvalSet::Test, recluster: false, rematch: false };
    pub const ALL: [Self; 4] = [Self::TRAIN, Self::TEST_RECLUSTER, Self::TEST_REMATCH, Self::TEST_INDUCTIVE];

    pub fn validate(&self) -> Result<()> {
        match (self.set, self.recluster, self.rematch) {
            (EvalSet::TrainUnlabeled, false, false) => Ok(()),
            (EvalSet::TrainUnlabeled, ..) => Err(Error::invalid("train evaluation takes no recluster/rematch flags")),
            (EvalSet::Test, true, false) => Err(Error::invalid("reclustered predictions always need a rematch")),
            (EvalSet::Test, ..) => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match (self.set, self.recluster, self.rematch) {
            (EvalSet::TrainUnlabeled, ..) => "train",
            (EvalSet::Test, true, _) => "test-recluster",
            (EvalSet::Test, false, true) => "test-rematch",
            (EvalSet::Test, false, false) => "test-inductive",
        }
    }
}

impl fmt::Display for EvalProtocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EvalProtocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| {
            Error::invalid(format!(
                "unknown protocol {s:?}; expected train, test-recluster, test-rematch, or test-inductive"
            ))
        })
    }
}

/// Training-set class sizes and the known/novel boundary, used for groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalContext {
    pub class_counts: Vec<usize>,
    pub known_classes: usize,
}

impl EvalContext {
    pub fn from_train(train: &EmbeddingDataset) -> Self {
        Self { class_counts: train.class_counts(), known_classes: train.known_classes() }
    }

    pub fn n_classes(&self) -> usize {
        self.class_counts.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub protocol: String,
    pub n_samples: usize,
    pub scores: GroupScores,
    pub per_class_recall: Vec<Option<f64>>,
    /// Cluster-to-class matching used for this report.
    pub matching: Vec<Option<usize>>,
}

fn report(
    name: &str,
    preds: &[usize],
    labels: &[usize],
    matching: Vec<Option<usize>>,
    ctx: &EvalContext,
) -> EvalReport {
    let mapped = apply_matching(preds, &matching);
    EvalReport {
        protocol: name.to_string(),
        n_samples: labels.len(),
        scores: group_metrics(&mapped, labels, &ctx.class_counts, ctx.known_classes),
        per_class_recall: per_class_recall(&mapped, labels, ctx.n_classes()),
        matching,
    }
}

fn check_labels(data: &EmbeddingDataset, ctx: &EvalContext) -> Result<Vec<usize>> {
    if data.is_empty() {
        return Err(Error::invalid("evaluation set is empty"));
    }
    let labels = data.labels();
    if let Some(l) = labels.iter().find(|&&l| l >= ctx.n_classes()) {
        return Err(Error::invalid(format!("label {l} outside the {} training classes", ctx.n_classes())));
    }
    Ok(labels)
}

/// Head-to-class matching on the unlabeled training samples.
pub fn train_matching(
    state: &TrainerState,
    train_unlabeled: &EmbeddingDataset,
    ctx: &EvalContext,
) -> Result<ClusterMatch> {
    let labels = check_labels(train_unlabeled, ctx)?;
    let preds = state.model().predict(&train_unlabeled.to_matrix(), state.active_heads())?;
    clustering_accuracy(&preds, &labels, state.dims().heads, ctx.n_classes())
}

/// Scores `data` under `protocol`. The inductive protocol needs the train
/// matching stored in the state.
pub fn evaluate(
    state: &TrainerState,
    data: &EmbeddingDataset,
    protocol: EvalProtocol,
    ctx: &EvalContext,
) -> Result<EvalReport> {
    protocol.validate()?;
    let labels = check_labels(data, ctx)?;
    let x = data.to_matrix();
    let heads = state.dims().heads;
    let name = protocol.name();
    match (protocol.set, protocol.recluster, protocol.rematch) {
        (EvalSet::TrainUnlabeled, ..) | (EvalSet::Test, false, true) => {
            let preds = state.model().predict(&x, state.active_heads())?;
            let m = clustering_accuracy(&preds, &labels, heads, ctx.n_classes())?;
            Ok(report(name, &preds, &labels, m.matching, ctx))
        }
        (EvalSet::Test, true, _) => {
            let k = state.active_heads().map_or(ctx.n_classes(), |m| m.iter().filter(|a| **a).count()).min(data.len());
            let h = state.model().project(&x)?;
            let seed = mix_seed(&[stream::EVAL_KMEANS, state.config().seed]);
            let preds = kmeans(&h, k, seed)?.assignments;
            let m = clustering_accuracy(&preds, &labels, k, ctx.n_classes())?;
            Ok(report(name, &preds, &labels, m.matching, ctx))
        }
        (EvalSet::Test, false, false) => {
            let matching = state.train_matching().ok_or_else(|| {
                Error::State(
                    "inductive evaluation needs the train-set matching; evaluate the train protocol first".into(),
                )
            })?;
            let preds = state.model().predict(&x, state.active_heads())?;
            Ok(report(name, &preds, &labels, matching.to_vec(), ctx))
        }
    }
}

/// Computes and stores the train matching when any protocol needs it,
/// then evaluates every protocol in order.
pub fn evaluate_protocols(
    state: &mut TrainerState,
    train_unlabeled: &EmbeddingDataset,
    test: &EmbeddingDataset,
    protocols: &[EvalProtocol],
    ctx: &EvalContext,
) -> Result<Vec<EvalReport>> {
    let needs_matching = protocols.contains(&EvalProtocol::TEST_INDUCTIVE);
    if needs_matching && state.train_matching().is_none() {
        let m = train_matching(state, train_unlabeled, ctx)?;
        state.set_train_matching(Some(m.matching))?;
    }
    let state = &*state;
    protocols
        .par_iter()
        .map(|p| {
            let data = match p.set {
                EvalSet::TrainUnlabeled => train_unlabeled,
                EvalSet::Test => test,
            };
            evaluate(state, data, *p, ctx)
        })
        .collect()
}

/// Restarts used by the raw-feature baseline.
pub const BASELINE_RESTARTS: u64 = 10;

/// k-means with `k` clusters on the raw vectors, Hungarian-matched. Keeps
/// the lowest-inertia run out of [`BASELINE_RESTARTS`] seeded restarts,
/// since a single k-means++ draw often misses small clusters.
pub fn kmeans_baseline(data: &EmbeddingDataset, k: usize, seed: u64, ctx: &EvalContext) -> Result<EvalReport> {
    let labels = check_labels(data, ctx)?;
    let x = data.to_matrix();
    let runs = (0..BASELINE_RESTARTS)
        .into_par_iter()
        .map(|r| kmeans(&x, k, mix_seed(&[stream::EVAL_KMEANS, seed, r])))
        .collect::<Result<Vec<_>>>()?;
    let best = runs.into_iter().reduce(|a, b| if b.inertia < a.inertia { b } else { a }).expect("at least one restart");
    let m = clustering_accuracy(&best.assignments, &labels, k, ctx.n_classes())?;
    Ok(report("kmeans-raw", &best.assignments, &labels, m.matching, ctx))
}
