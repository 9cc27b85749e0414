//! Matching-based accuracies, the protocol grid, group breakdowns, the tail
//! discovery ratio, and report files.

mod hungarian;
mod metrics;
mod protocol;
mod report;

pub use hungarian::hungarian;
pub use metrics::{
    apply_matching, balanced_accuracy, clustering_accuracy, group_classes, group_metrics, head_tail_partition,
    per_class_recall, phi_metric, subset_accuracy, ClusterMatch, Group, GroupScores, Phi,
};
pub use protocol::{
    evaluate, evaluate_protocols, kmeans_baseline, train_matching, EvalContext, EvalProtocol, EvalReport, EvalSet,
    BASELINE_RESTARTS,
};
pub use report::{report_csv, report_json};

#[cfg(test)]
mod tests;
