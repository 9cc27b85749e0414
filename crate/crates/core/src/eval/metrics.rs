use serde::{Deserialize, Serialize};

use super::hungarian::hungarian;
use crate::error::{Error, Result};
use crate::numerics::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterMatch {
    pub acc: f64,
    /// Class matched to each cluster; `None` for unmatched clusters.
    pub matching: Vec<Option<usize>>,
}

/// Hungarian-matched accuracy of cluster ids against class labels.
pub fn clustering_accuracy(
    predictions: &[usize],
    labels: &[usize],
    n_clusters: usize,
    n_classes: usize,
) -> Result<ClusterMatch> {
    if predictions.len() != labels.len() {
        return Err(Error::invalid(format!("{} predictions for {} labels", predictions.len(), labels.len())));
    }
    if predictions.is_empty() {
        return Err(Error::invalid("clustering accuracy on an empty set"));
    }
    if let Some(p) = predictions.iter().find(|&&p| p >= n_clusters) {
        return Err(Error::invalid(format!("prediction {p} outside [0, {n_clusters})")));
    }
    if let Some(l) = labels.iter().find(|&&l| l >= n_classes) {
        return Err(Error::invalid(format!("label {l} outside [0, {n_classes})")));
    }
    let mut counts = Matrix::zeros(n_clusters, n_classes);
    for (&p, &l) in predictions.iter().zip(labels) {
        counts.set(p, l, counts.get(p, l) + 1.0);
    }
    let matching = hungarian(&counts)?;
    let matched: f64 = matching.iter().enumerate().filter_map(|(k, c)| c.map(|c| counts.get(k, c))).sum();
    Ok(ClusterMatch { acc: matched / labels.len() as f64, matching })
}

/// Maps cluster ids through a matching; unmatched clusters give `None`.
pub fn apply_matching(predictions: &[usize], matching: &[Option<usize>]) -> Vec<Option<usize>> {
    predictions.iter().map(|&p| matching.get(p).copied().flatten()).collect()
}

/// Recall of every class in `0..n_classes`; `None` for classes with no
/// samples.
pub fn per_class_recall(mapped: &[Option<usize>], labels: &[usize], n_classes: usize) -> Vec<Option<f64>> {
    let mut hit = vec![0usize; n_classes];
    let mut total = vec![0usize; n_classes];
    for (m, &l) in mapped.iter().zip(labels) {
        total[l] += 1;
        if *m == Some(l) {
            hit[l] += 1;
        }
    }
    hit.iter().zip(&total).map(|(&h, &t)| (t > 0).then(|| h as f64 / t as f64)).collect()
}

/// Mean recall over the classes of `subset` present in `labels`.
pub fn balanced_accuracy(mapped: &[Option<usize>], labels: &[usize], subset: &[usize]) -> Result<f64> {
    if mapped.len() != labels.len() {
        return Err(Error::invalid("predictions and labels differ in length"));
    }
    let n = labels.iter().chain(subset).max().map_or(0, |m| m + 1);
    let recall = per_class_recall(mapped, labels, n);
    let present: Vec<f64> = subset.iter().filter_map(|&c| recall[c]).collect();
    if present.is_empty() {
        return Err(Error::UndefinedMetric("no class of the subset occurs in the evaluation set".into()));
    }
    Ok(present.iter().sum::<f64>() / present.len() as f64)
}

/// Fraction of samples whose label is in `subset` that are predicted right.
pub fn subset_accuracy(mapped: &[Option<usize>], labels: &[usize], subset: &[usize]) -> Option<f64> {
    let mut hit = 0usize;
    let mut total = 0usize;
    for (m, &l) in mapped.iter().zip(labels) {
        if subset.contains(&l) {
            total += 1;
            if *m == Some(l) {
                hit += 1;
            }
        }
    }
    (total > 0).then(|| hit as f64 / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    All,
    Old,
    New,
    KMany,
    KMed,
    KFew,
    UMany,
    UMed,
    UFew,
}

impl Group {
    pub const ALL: [Group; 9] = [
        Group::All,
        Group::Old,
        Group::New,
        Group::KMany,
        Group::KMed,
        Group::KFew,
        Group::UMany,
        Group::UMed,
        Group::UFew,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Group::All => "all",
            Group::Old => "old",
            Group::New => "new",
            Group::KMany => "kmany",
            Group::KMed => "kmed",
            Group::KFew => "kfew",
            Group::UMany => "umany",
            Group::UMed => "umed",
            Group::UFew => "ufew",
        }
    }
}

/// Many/Median/Few thirds of a class partition, by training count
/// descending with ties broken by class index. Remainders go to the
/// earlier groups.
fn thirds(classes: &[usize], counts: &[usize]) -> [Vec<usize>; 3] {
    let mut order = classes.to_vec();
    order.sort_by(|a, b| counts[*b].cmp(&counts[*a]).then(a.cmp(b)));
    let n = order.len();
    let base = n / 3;
    let rem = n % 3;
    let sizes = [base + usize::from(rem > 0), base + usize::from(rem > 1), base];
    let mut out: [Vec<usize>; 3] = Default::default();
    let mut start = 0;
    for (g, size) in sizes.iter().enumerate() {
        out[g] = order[start..start + size].to_vec();
        start += size;
    }
    out
}

/// Classes in each of the nine groups. Known classes are `0..known`.
pub fn group_classes(class_counts: &[usize], known: usize) -> Vec<(Group, Vec<usize>)> {
    let n = class_counts.len();
    let old: Vec<usize> = (0..known.min(n)).collect();
    let new: Vec<usize> = (known.min(n)..n).collect();
    let [km, kd, kf] = thirds(&old, class_counts);
    let [um, ud, uf] = thirds(&new, class_counts);
    vec![
        (Group::All, (0..n).collect()),
        (Group::Old, old),
        (Group::New, new),
        (Group::KMany, km),
        (Group::KMed, kd),
        (Group::KFew, kf),
        (Group::UMany, um),
        (Group::UMed, ud),
        (Group::UFew, uf),
    ]
}

/// Accuracy and balanced accuracy for every group; `None` where a group has
/// no samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupScores {
    pub acc: Vec<(Group, Option<f64>)>,
    pub bacc: Vec<(Group, Option<f64>)>,
}

impl GroupScores {
    pub fn acc(&self, g: Group) -> Option<f64> {
        self.acc.iter().find(|(x, _)| *x == g).and_then(|(_, v)| *v)
    }

    pub fn bacc(&self, g: Group) -> Option<f64> {
        self.bacc.iter().find(|(x, _)| *x == g).and_then(|(_, v)| *v)
    }
}

pub fn group_metrics(mapped: &[Option<usize>], labels: &[usize], class_counts: &[usize], known: usize) -> GroupScores {
    let groups = group_classes(class_counts, known);
    let mut acc = Vec::with_capacity(groups.len());
    let mut bacc = Vec::with_capacity(groups.len());
    for (g, classes) in &groups {
        acc.push((*g, subset_accuracy(mapped, labels, classes)));
        bacc.push((*g, balanced_accuracy(mapped, labels, classes).ok()));
    }
    GroupScores { acc, bacc }
}

/// Head classes have a training count at or above the median count.
pub fn head_tail_partition(class_counts: &[usize]) -> Vec<bool> {
    let mut sorted = class_counts.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    if n == 0 {
        return Vec::new();
    }
    let median = if n % 2 == 1 { sorted[n / 2] as f64 } else { (sorted[n / 2 - 1] + sorted[n / 2]) as f64 / 2.0 };
    class_counts.iter().map(|&c| (c as f64) < median).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Phi {
    pub head: f64,
    pub tail: f64,
}

/// Over-representation of head and tail samples among the lowest-scoring
/// `fraction` of samples. `is_tail[i]` marks sample `i`.
pub fn phi_metric(scores: &[f64], ids: &[u64], is_tail: &[bool], fraction: f64) -> Result<Phi> {
    let n = scores.len();
    if ids.len() != n || is_tail.len() != n {
        return Err(Error::invalid("phi: scores, ids, and groups differ in length"));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid(format!("phi fraction must lie in (0, 1), got {fraction}")));
    }
    let k = (fraction * n as f64).floor() as usize;
    if k == 0 {
        return Err(Error::UndefinedMetric("phi subset is empty".into()));
    }
    let n_tail = is_tail.iter().filter(|t| **t).count();
    if n_tail == 0 || n_tail == n {
        return Err(Error::UndefinedMetric("phi needs both head and tail samples".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(ids[a].cmp(&ids[b])));
    let sub_tail = order[..k].iter().filter(|&&i| is_tail[i]).count();
    let ratio = |inside: usize, total: usize| (inside as f64 / k as f64) / (total as f64 / n as f64);
    Ok(Phi { head: ratio(k - sub_tail, n - n_tail), tail: ratio(sub_tail, n_tail) })
}
