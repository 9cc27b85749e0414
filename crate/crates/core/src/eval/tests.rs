use super::*;
use crate::data::{generate_blobs, make_long_tailed_split, BlobSpec, LongTailedSplit, MismatchMode, SplitSpec};
use crate::trainer::{fit, TrainConfig, TrainerState};

fn split(seed: u64) -> LongTailedSplit {
    let pool =
        generate_blobs(&BlobSpec { n_classes: 4, dim: 6, separation: 10.0, std: 1.0, per_class: 60, seed }).unwrap();
    let spec = SplitSpec {
        known_classes: 2,
        novel_classes: 2,
        n_max: 12,
        gamma_l: 2.0,
        gamma_u: 2.0,
        mode: MismatchMode::Mcar,
        labeled_fraction: 0.5,
        test_per_class: 8,
        seed,
    };
    make_long_tailed_split(&pool, &spec).unwrap()
}

fn trained(s: &LongTailedSplit) -> TrainerState {
    let cfg = TrainConfig {
        epochs: 2,
        batch_size: 16,
        queue_size: 32,
        knn_k: 5,
        projector_hidden: 12,
        projection_dim: 8,
        tau_t_warmup_epochs: 1,
        ..TrainConfig::default()
    };
    fit(&s.train(), cfg).unwrap().0
}

#[test]
fn protocol_names_round_trip() {
    for p in EvalProtocol::ALL {
        p.validate().unwrap();
        assert_eq!(p.name().parse::<EvalProtocol>().unwrap(), p);
    }
    assert!("test".parse::<EvalProtocol>().is_err());
    let bad = EvalProtocol { set: EvalSet::Test, recluster: true, rematch: false };
    assert!(bad.validate().is_err());
}

#[test]
fn inductive_needs_the_train_matching() {
    let s = split(3);
    let state = trained(&s);
    let ctx = EvalContext::from_train(&s.train());
    let err = evaluate(&state, &s.test, EvalProtocol::TEST_INDUCTIVE, &ctx).unwrap_err();
    assert!(matches!(err, crate::error::Error::State(_)));

    let mut state = state;
    let reports = evaluate_protocols(&mut state, &s.unlabeled, &s.test, &EvalProtocol::ALL, &ctx).unwrap();
    assert_eq!(reports.len(), 4);
    assert!(state.train_matching().is_some());
    let names: Vec<&str> = reports.iter().map(|r| r.protocol.as_str()).collect();
    assert_eq!(names, ["train", "test-recluster", "test-rematch", "test-inductive"]);
    for r in &reports {
        let acc = r.scores.acc(Group::All).unwrap();
        assert!((0.0..=1.0).contains(&acc));
    }
    // rematching can only match or beat a fixed matching
    assert!(reports[2].scores.acc(Group::All).unwrap() >= reports[3].scores.acc(Group::All).unwrap() - 1e-12);
    assert_eq!(reports[3].matching, state.train_matching().unwrap());
}

#[test]
fn evaluation_is_deterministic() {
    let s = split(4);
    let ctx = EvalContext::from_train(&s.train());
    let mut a = trained(&s);
    let mut b = a.clone();
    let ra = evaluate_protocols(&mut a, &s.unlabeled, &s.test, &EvalProtocol::ALL, &ctx).unwrap();
    let rb = evaluate_protocols(&mut b, &s.unlabeled, &s.test, &EvalProtocol::ALL, &ctx).unwrap();
    assert_eq!(ra, rb);
    assert_eq!(report_csv(&ra), report_csv(&rb));
}

#[test]
fn raw_kmeans_on_separated_blobs_is_near_perfect() {
    let s = split(5);
    let ctx = EvalContext::from_train(&s.train());
    let r = kmeans_baseline(&s.test, 4, 0, &ctx).unwrap();
    assert!(r.scores.acc(Group::All).unwrap() > 0.95);
}

#[test]
fn csv_and_json_mark_undefined_values() {
    let s = split(6);
    let ctx = EvalContext::from_train(&s.train());
    let mut r = kmeans_baseline(&s.test, 4, 0, &ctx).unwrap();
    r.scores.acc.iter_mut().find(|(g, _)| *g == Group::KFew).unwrap().1 = None;
    let csv = report_csv(std::slice::from_ref(&r));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "protocol,metric,group,value");
    assert_eq!(lines.len(), 1 + 2 * Group::ALL.len());
    assert!(lines.contains(&"kmeans-raw,acc,kfew,NA"));
    let json = report_json(&[r]);
    assert!(json["protocols"]["kmeans-raw"]["acc"]["kfew"].is_null());
    assert!(json["protocols"]["kmeans-raw"]["acc"]["all"].is_number());
}

#[test]
fn labels_outside_the_context_are_rejected() {
    let s = split(7);
    let ctx = EvalContext { class_counts: vec![5, 5], known_classes: 1 };
    assert!(kmeans_baseline(&s.test, 2, 0, &ctx).is_err());
}
