//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion.
//! Pass criterion numbers as arguments to run a subset, e.g.
//! `cargo test --test acceptance -- 3 7`. Failures only turn into a non-zero
//! exit when `ROWSSL_ACCEPTANCE_STRICT` is set.

#![allow(clippy::needless_range_loop)]

use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rowssl::data::{
    generate_blobs, make_long_tailed_split, profile_counts, BlobSpec, LongTailedSplit, MismatchMode, SplitSpec,
};
use rowssl::eval::{
    evaluate_protocols, hungarian, kmeans_baseline, report_csv, report_json, EvalContext, EvalProtocol, EvalReport,
    Group,
};
use rowssl::losses::{dynamic_temperature, entropy_regularizer, softmax_rows, RepConfig};
use rowssl::numerics::{softmax_temp_backward, CosineClassifier, Matrix, Parameters, SmallNet};
use rowssl::queue::QueueSnapshot;
use rowssl::tailedness::{init_prototypes, knn_density, update_prototypes, PrototypeBank};
use rowssl::trainer::{fit, ClassCountMode, Method, Model, ObjectiveConfig, ObjectiveInputs, TrainConfig};

type Check = fn() -> (bool, String);

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let mut m = Matrix::zeros(rows, cols);
    for v in m.as_mut_slice() {
        *v = StandardNormal.sample(rng);
    }
    m
}

fn unit_rows(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let mut m = gaussian(rng, rows, cols);
    m.normalize_rows();
    m
}

// ---------------------------------------------------------------- 1

fn best_by_brute_force(p: &Matrix) -> f64 {
    let (r, c) = p.shape();
    // assign each row a distinct column or nothing; only min(r, c) rows can match
    fn go(p: &Matrix, row: usize, used: &mut Vec<bool>, free_skips: usize) -> f64 {
        if row == p.rows() {
            return 0.0;
        }
        let mut best = f64::NEG_INFINITY;
        if free_skips > 0 {
            best = go(p, row + 1, used, free_skips - 1);
        }
        for j in 0..p.cols() {
            if !used[j] {
                used[j] = true;
                best = best.max(p.row(row)[j] + go(p, row + 1, used, free_skips));
                used[j] = false;
            }
        }
        best
    }
    go(p, 0, &mut vec![false; c], r.saturating_sub(c))
}

fn hungarian_oracle() -> (bool, String) {
    let start = Instant::now();
    let mut r = rng(1);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let rows = r.random_range(1..=7);
        let cols = r.random_range(1..=7);
        let mut p = Matrix::zeros(rows, cols);
        // small integers exercise ties; dyadic reals keep every sum exact
        let ties = r.random_bool(0.5);
        for v in p.as_mut_slice() {
            *v = if ties {
                r.random_range(0..4) as f64
            } else {
                (r.random_range(-100.0..100.0f64) * 1048576.0).round() / 1048576.0
            };
        }
        let assignment = hungarian(&p).expect("finite matrix");
        let total: f64 = assignment.iter().enumerate().filter_map(|(i, j)| j.map(|j| p.row(i)[j])).sum();
        if total != best_by_brute_force(&p) {
            mismatches += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    (mismatches == 0 && secs < 10.0, format!("{mismatches} mismatches in 1000 matrices, {secs:.2} s"))
}

// ---------------------------------------------------------------- 2

struct GradCase {
    model: Model,
    view_a: Matrix,
    view_b: Matrix,
    labels: Vec<Option<usize>>,
    keys: Matrix,
    queue: QueueSnapshot,
    temperatures: Vec<f64>,
    targets_a: Matrix,
    targets_b: Matrix,
    cfg: ObjectiveConfig,
}

impl GradCase {
    fn inputs(&self) -> ObjectiveInputs<'_> {
        ObjectiveInputs {
            view_a: &self.view_a,
            view_b: &self.view_b,
            labels: &self.labels,
            keys: &self.keys,
            queue: Some(&self.queue),
            temperatures: &self.temperatures,
            targets_a: &self.targets_a,
            targets_b: &self.targets_b,
        }
    }
}

fn random_net(r: &mut ChaCha8Rng, dims: &[usize]) -> SmallNet {
    let mut net = SmallNet::new(dims, r).unwrap();
    for p in net.params_mut() {
        for v in p.iter_mut() {
            *v += 0.1 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, r);
        }
    }
    net
}

fn soft_targets(r: &mut ChaCha8Rng, labels: &[Option<usize>], c: usize) -> Matrix {
    let mut t = softmax_rows(&gaussian(r, labels.len(), c), 0.5);
    for (i, l) in labels.iter().enumerate() {
        if let Some(l) = l {
            t.row_mut(i).iter_mut().enumerate().for_each(|(k, v)| *v = if k == *l { 1.0 } else { 0.0 });
        }
    }
    t
}

/// Smallest distance of a projector ReLU input to its kink, over both views
/// and the perturbation scale of every parameter.
fn kink_margin(case: &GradCase) -> f64 {
    let first = &case.model.projector.layers()[0];
    let mut margin = f64::INFINITY;
    for x in [&case.view_a, &case.view_b] {
        let z = case.model.encoder.infer(x).unwrap();
        for row in z.iter_rows() {
            for (w, b) in first.weight.iter_rows().zip(&first.bias) {
                let pre: f64 = w.iter().zip(row).map(|(a, b)| a * b).sum::<f64>() + b;
                margin = margin.min(pre.abs());
            }
        }
    }
    margin
}

fn grad_case(r: &mut ChaCha8Rng) -> GradCase {
    loop {
        let b = r.random_range(2..=8);
        let d = r.random_range(2..=16);
        let c = r.random_range(2..=6);
        let hidden = r.random_range(2..=12);
        let proj = r.random_range(2..=8);
        let q = r.random_range(1..=12);
        let model = Model {
            encoder: random_net(r, &[d, d]),
            projector: random_net(r, &[d, hidden, proj]),
            classifier: CosineClassifier::from_weight(gaussian(r, c, d)),
        };
        let labels: Vec<Option<usize>> =
            (0..b).map(|_| if r.random_bool(0.5) { Some(r.random_range(0..c)) } else { None }).collect();
        let queue_labels = (0..q).map(|_| if r.random_bool(0.6) { r.random_range(0..c) as i64 } else { -1 }).collect();
        let case = GradCase {
            view_a: gaussian(r, b, d),
            view_b: gaussian(r, b, d),
            keys: unit_rows(r, b, proj),
            queue: QueueSnapshot::from_parts(unit_rows(r, q, proj), queue_labels).unwrap(),
            temperatures: (0..b).map(|_| r.random_range(0.05..1.0)).collect(),
            targets_a: soft_targets(r, &labels, c),
            targets_b: soft_targets(r, &labels, c),
            labels,
            model,
            cfg: ObjectiveConfig {
                rep: RepConfig { lambda_rep: r.random_range(0.0..1.0), tau_sup: 0.07 },
                tau_s: 0.1,
                epsilon: r.random_range(0.0..4.0),
                use_representation: true,
                use_classifier: true,
            },
        };
        // finite differences are meaningless across a ReLU kink
        if kink_margin(&case) > 1e-3 {
            return case;
        }
    }
}

const FD_STEP: f64 = 1e-5;
/// Gradients smaller than this are compared in absolute terms.
const FD_FLOOR: f64 = 1e-6;

fn max_fd_error(case: &GradCase, cfg: ObjectiveConfig) -> f64 {
    let mut model = case.model.clone();
    model.objective(&case.inputs(), &cfg).unwrap();
    let analytic: Vec<f64> = rowssl::numerics::Trainable::grads(&model).into_iter().flatten().copied().collect();
    let n_params = analytic.len();
    let mut worst: f64 = 0.0;
    for idx in 0..n_params {
        let eval_at = |delta: f64| {
            let mut m = case.model.clone();
            *m.params_mut().into_iter().flat_map(|p| p.iter_mut()).nth(idx).unwrap() += delta;
            m.objective(&case.inputs(), &cfg).unwrap().total
        };
        let numeric = (eval_at(FD_STEP) - eval_at(-FD_STEP)) / (2.0 * FD_STEP);
        let a = analytic[idx];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FD_FLOOR);
        worst = worst.max(err);
    }
    worst
}

fn gradient_suite() -> (bool, String) {
    let start = Instant::now();
    let mut r = rng(2);
    let mut worst = [0.0f64; 3];
    for _ in 0..100 {
        let case = grad_case(&mut r);
        let variants = [
            ObjectiveConfig { use_classifier: false, ..case.cfg },
            ObjectiveConfig { use_representation: false, ..case.cfg },
            case.cfg,
        ];
        for (w, cfg) in worst.iter_mut().zip(variants) {
            *w = w.max(max_fd_error(&case, cfg));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst.iter().all(|w| *w < 1e-4) && secs < 60.0;
    (pass, format!("max rel err rep {:.1e}, cls {:.1e}, total {:.1e}; {secs:.1} s", worst[0], worst[1], worst[2]))
}

// ---------------------------------------------------------------- 3

fn dynamic_temperature_contract() -> (bool, String) {
    let mut r = rng(3);
    let (lo_tau, hi_tau) = (0.05, 1.0);
    let mut failures = Vec::new();
    for trial in 0..10_000 {
        let m = r.random_range(2..=32);
        let densities: Vec<f64> = (0..m).map(|_| r.random_range(-1.0..1.0)).collect();
        let lo = densities.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = densities.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let tau = |s: f64| dynamic_temperature(s, &densities, lo_tau, hi_tau).unwrap();
        if tau(lo) != lo_tau || tau(hi) != hi_tau {
            failures.push(format!("trial {trial}: endpoints {} {}", tau(lo), tau(hi)));
        }
        let mut probes: Vec<f64> = (0..16).map(|_| r.random_range(-1.5..1.5)).collect();
        probes.extend(&densities);
        probes.sort_by(f64::total_cmp);
        let taus: Vec<f64> = probes.iter().map(|s| tau(*s)).collect();
        if taus.iter().any(|t| !(lo_tau..=hi_tau).contains(t)) {
            failures.push(format!("trial {trial}: out of range"));
        }
        if taus.windows(2).any(|w| w[1] < w[0]) {
            failures.push(format!("trial {trial}: not monotone"));
        }
    }
    let detail = match failures.first() {
        None => "10^4 density vectors: range, exact endpoints, monotone".to_string(),
        Some(f) => format!("{} failures, first: {f}", failures.len()),
    };
    (failures.is_empty(), detail)
}

// ---------------------------------------------------------------- 4

fn density_and_prototype_invariants() -> (bool, String) {
    let mut r = rng(4);
    let mut problems = Vec::new();

    for _ in 0..200 {
        let dim = r.random_range(2..=16);
        let q = r.random_range(4..=64);
        let queue = QueueSnapshot::from_parts(unit_rows(&mut r, q, dim), vec![-1; q]).unwrap();
        let m = r.random_range(1..=8);
        let bank = PrototypeBank::from_parts(unit_rows(&mut r, m, dim), Vec::new()).unwrap();
        let k = r.random_range(1..=q);
        if knn_density(&bank, &queue, k).unwrap().iter().any(|d| !(-1.0..=1.0).contains(d)) {
            problems.push("density outside [-1, 1]".to_string());
        }
    }

    let proto = unit_rows(&mut r, 1, 12);
    let mut rows = vec![proto.row(0).to_vec(); 15];
    rows.extend((0..20).map(|_| unit_rows(&mut r, 1, 12).row(0).iter().map(|v| -v.abs()).collect::<Vec<_>>()));
    let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    let queue = QueueSnapshot::from_parts(Matrix::from_rows(&refs).unwrap(), vec![-1; refs.len()]).unwrap();
    let bank = PrototypeBank::from_parts(proto.clone(), Vec::new()).unwrap();
    let d = knn_density(&bank, &queue, 15).unwrap()[0];
    if (d - 1.0).abs() > 1e-12 {
        problems.push(format!("identical neighbours gave {d}"));
    }

    let dim = 10;
    let queue = QueueSnapshot::from_parts(unit_rows(&mut r, 64, dim), vec![-1; 64]).unwrap();
    let mut bank = init_prototypes(&queue, 6, 4).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let q = QueueSnapshot::from_parts(unit_rows(&mut r, 32, dim), vec![-1; 32]).unwrap();
        update_prototypes(&mut bank, &q, r.random_range(0.0..1.0), 15).unwrap();
        for row in bank.prototypes().iter_rows() {
            worst = worst.max((rowssl::numerics::norm(row) - 1.0).abs());
        }
    }
    if worst > 1e-9 {
        problems.push(format!("prototype norm drift {worst:.1e}"));
    }

    let before = bank.prototypes().clone();
    let q = QueueSnapshot::from_parts(unit_rows(&mut r, 32, dim), vec![-1; 32]).unwrap();
    update_prototypes(&mut bank, &q, 1.0, 15).unwrap();
    if bank.prototypes() != &before {
        problems.push("lambda_tail = 1 moved the prototypes".to_string());
    }

    let detail = if problems.is_empty() {
        format!("range ok, identical-neighbour density {d}, norm drift {worst:.1e}, lambda_tail=1 exact no-op")
    } else {
        problems.join("; ")
    };
    (problems.is_empty(), detail)
}

// ---------------------------------------------------------------- 5

fn kl_to_uniform(p_a: &Matrix, p_b: &Matrix) -> f64 {
    let c = p_a.cols();
    let h = entropy_regularizer(p_a, p_b, 1.0).unwrap().entropy;
    (c as f64).ln() - h
}

fn entropy_direction() -> (bool, String) {
    let mut r = rng(5);
    let tau = 0.1;
    let step = 0.01;
    let mut worst_ratio: f64 = 0.0;
    let mut violations = 0;
    for _ in 0..10 {
        let (b, c) = (r.random_range(2..=16), r.random_range(2..=10));
        let mut la = gaussian(&mut r, b, c);
        let mut lb = gaussian(&mut r, b, c);
        let first = kl_to_uniform(&softmax_rows(&la, tau), &softmax_rows(&lb, tau));
        let mut prev = first;
        for _ in 0..100 {
            let (pa, pb) = (softmax_rows(&la, tau), softmax_rows(&lb, tau));
            let term = entropy_regularizer(&pa, &pb, 1.0).unwrap();
            for (l, p, g) in [(&mut la, &pa, &term.grad_a), (&mut lb, &pb, &term.grad_b)] {
                for i in 0..b {
                    let gl = softmax_temp_backward(p.row(i), g.row(i), tau);
                    l.row_mut(i).iter_mut().zip(gl).for_each(|(v, gv)| *v -= step * gv);
                }
            }
            let kl = kl_to_uniform(&softmax_rows(&la, tau), &softmax_rows(&lb, tau));
            if kl > prev {
                violations += 1;
            }
            prev = kl;
        }
        worst_ratio = worst_ratio.max(prev / first);
    }
    (
        violations == 0 && worst_ratio < 1.0,
        format!("{violations} increases over 10 x 100 steps; final/initial KL at most {worst_ratio:.3}"),
    )
}

// ---------------------------------------------------------------- 6

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|a, b| v[*a].total_cmp(&v[*b]));
    let mut out = vec![0.0; v.len()];
    for (rank, i) in idx.into_iter().enumerate() {
        out[i] = rank as f64;
    }
    out
}

fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let d2: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - y).powi(2)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}

fn split_exactness() -> (bool, String) {
    let profile = profile_counts(100, 100.0, 3);
    let pool = generate_blobs(&BlobSpec { n_classes: 3, dim: 4, separation: 1.0, std: 0.05, per_class: 400, seed: 6 })
        .unwrap();
    let spec = SplitSpec {
        known_classes: 3,
        novel_classes: 0,
        n_max: 100,
        gamma_l: 100.0,
        gamma_u: 100.0,
        mode: MismatchMode::Mcar,
        labeled_fraction: 0.5,
        test_per_class: 0,
        seed: 6,
    };
    let mcar = make_long_tailed_split(&pool, &spec).unwrap();

    let pool6 = generate_blobs(&BlobSpec { n_classes: 6, dim: 4, separation: 1.0, std: 0.05, per_class: 400, seed: 6 })
        .unwrap();
    let mnar_spec = SplitSpec { known_classes: 3, novel_classes: 3, mode: MismatchMode::Mnar, ..spec };
    let mnar = make_long_tailed_split(&pool6, &mnar_spec).unwrap();
    let head_to_tail: Vec<f64> = profile_counts(100, 100.0, 6).iter().map(|c| *c as f64).collect();
    let unlabeled: Vec<f64> = mnar.manifest.unlabeled_counts.iter().map(|c| *c as f64).collect();
    let rho = spearman(&head_to_tail, &unlabeled);

    let pass = profile == [100, 10, 1] && mcar.manifest.labeled_counts == [100, 10, 1] && rho == -1.0;
    (
        pass,
        format!(
            "profile {profile:?}, labeled {:?}, MNAR unlabeled {:?} (rank corr {rho})",
            mcar.manifest.labeled_counts, mnar.manifest.unlabeled_counts
        ),
    )
}

// ---------------------------------------------------------------- 7-11 shared setup

/// Desk-scale blob geometry: separation/std = 20, 8 classes, 4 known.
fn desk_split(seed: u64, mode: MismatchMode) -> LongTailedSplit {
    let n_max = 100;
    let pool = generate_blobs(&BlobSpec {
        n_classes: 8,
        dim: 32,
        separation: 1.0,
        std: 0.05,
        per_class: 3 * n_max + 50,
        seed,
    })
    .unwrap();
    let spec = SplitSpec {
        known_classes: 4,
        novel_classes: 4,
        n_max,
        gamma_l: 10.0,
        gamma_u: 10.0,
        mode,
        labeled_fraction: 0.5,
        test_per_class: 50,
        seed,
    };
    make_long_tailed_split(&pool, &spec).unwrap()
}

fn desk_config(seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: 50,
        batch_size: 64,
        lr: 0.03,
        epsilon: 0.5,
        queue_size: 256,
        projector_hidden: 64,
        projection_dim: 32,
        noise_scale: 0.1,
        seed,
        ..TrainConfig::default()
    }
}

struct Run {
    reports: Vec<EvalReport>,
    oracle: EvalReport,
    train_secs: f64,
}

fn train_and_evaluate(split: &LongTailedSplit, config: TrainConfig) -> Run {
    let train = split.train();
    let ctx = EvalContext::from_train(&train);
    let start = Instant::now();
    let (mut state, _) = fit(&train, config).unwrap();
    if state.config().class_count == ClassCountMode::Estimate {
        let est = state.estimate_class_count(&train).unwrap();
        state.set_active_heads(Some(est.active)).unwrap();
    }
    let reports = evaluate_protocols(&mut state, &split.unlabeled, &split.test, &EvalProtocol::ALL, &ctx).unwrap();
    let train_secs = start.elapsed().as_secs_f64();
    let oracle = kmeans_baseline(&split.unlabeled, ctx.n_classes(), state.config().seed, &ctx).unwrap();
    Run { reports, oracle, train_secs }
}

fn report(run: &Run, protocol: EvalProtocol) -> &EvalReport {
    run.reports.iter().find(|r| r.protocol == protocol.name()).unwrap()
}

const DESK_SEED: u64 = 0;

fn desk_run() -> &'static Run {
    static RUN: OnceLock<Run> = OnceLock::new();
    RUN.get_or_init(|| train_and_evaluate(&desk_split(DESK_SEED, MismatchMode::Mcar), desk_config(DESK_SEED)))
}

fn pct(v: f64) -> String {
    format!("{:.1}", 100.0 * v)
}

// ---------------------------------------------------------------- 7

fn desk_end_to_end() -> (bool, String) {
    let run = desk_run();
    let oracle = run.oracle.scores.acc(Group::All).unwrap();
    let train = report(run, EvalProtocol::TRAIN);
    let acc = train.scores.acc(Group::All).unwrap();
    let trans_bacc = train.scores.bacc(Group::All).unwrap();
    let ind_bacc = report(run, EvalProtocol::TEST_INDUCTIVE).scores.bacc(Group::All).unwrap();
    let pass = oracle >= 0.95 && acc >= oracle - 0.05 && ind_bacc >= trans_bacc - 0.10 && run.train_secs < 300.0;
    (
        pass,
        format!(
            "transductive ACC {} vs k-means oracle {}; inductive bACC {} vs transductive bACC {}; {:.1} s",
            pct(acc),
            pct(oracle),
            pct(ind_bacc),
            pct(trans_bacc),
            run.train_secs
        ),
    )
}

// ---------------------------------------------------------------- 8

fn novel_inductive_bacc(run: &Run) -> f64 {
    report(run, EvalProtocol::TEST_INDUCTIVE).scores.bacc(Group::New).unwrap()
}

fn dts_beats_fixed_temperature() -> (bool, String) {
    let seeds = 0..5u64;
    let mut full = Vec::new();
    let mut ablated = Vec::new();
    for seed in seeds {
        let split = desk_split(seed, MismatchMode::Mnar);
        full.push(novel_inductive_bacc(&train_and_evaluate(&split, desk_config(seed))));
        let ablation = TrainConfig { tau_min: 0.07, tau_max: 0.07, lambda_var: 0.0, ..desk_config(seed) };
        ablated.push(novel_inductive_bacc(&train_and_evaluate(&split, ablation)));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (f, a) = (mean(&full), mean(&ablated));
    let per_seed = |v: &[f64]| v.iter().map(|x| pct(*x)).collect::<Vec<_>>().join(" ");
    (
        f > a,
        format!(
            "novel inductive bACC over 5 MNAR seeds: DTS {} [{}] vs fixed-temperature {} [{}]",
            pct(f),
            per_seed(&full),
            pct(a),
            per_seed(&ablated)
        ),
    )
}

// ---------------------------------------------------------------- 9

fn rematch_dominates() -> (bool, String) {
    let mut checked = 0;
    let mut worst_gap = f64::INFINITY;
    let mut runs: Vec<&Run> = vec![desk_run()];
    let extra: Vec<Run> = (1..3u64)
        .map(|seed| {
            let cfg = TrainConfig { method: Method::FixedTemperature, ..desk_config(seed) };
            train_and_evaluate(&desk_split(seed, MismatchMode::Mnar), cfg)
        })
        .collect();
    runs.extend(extra.iter());
    for run in runs {
        let rematch = report(run, EvalProtocol::TEST_REMATCH).scores.acc(Group::All).unwrap();
        let fixed = report(run, EvalProtocol::TEST_INDUCTIVE).scores.acc(Group::All).unwrap();
        worst_gap = worst_gap.min(rematch - fixed);
        checked += 1;
    }
    (worst_gap >= 0.0, format!("{checked} checkpoints; smallest rematch - fixed ACC gap {:.4}", worst_gap))
}

// ---------------------------------------------------------------- 10

fn class_count_estimate() -> (bool, String) {
    let mut estimates = Vec::new();
    for seed in 0..5u64 {
        let split = desk_split(seed, MismatchMode::Mcar);
        let train = split.train();
        let cfg = TrainConfig { class_count: ClassCountMode::Estimate, initial_classes: Some(16), ..desk_config(seed) };
        let (state, _) = fit(&train, cfg).unwrap();
        estimates.push(state.estimate_class_count(&train).unwrap().count);
    }
    let hits = estimates.iter().filter(|c| (6..=10).contains(*c)).count();
    (hits >= 4, format!("estimated class counts {estimates:?}; {hits} of 5 in [6, 10]"))
}

// ---------------------------------------------------------------- 11

fn report_bytes(run: &Run) -> (Vec<u8>, Vec<u8>) {
    let csv = report_csv(&run.reports).into_bytes();
    let json = serde_json::to_vec_pretty(&report_json(&run.reports)).unwrap();
    (csv, json)
}

fn deterministic_reports() -> (bool, String) {
    let first = report_bytes(desk_run());
    let again = train_and_evaluate(&desk_split(DESK_SEED, MismatchMode::Mcar), desk_config(DESK_SEED));
    let second = report_bytes(&again);
    let dir = tempfile::tempdir().unwrap();
    let mut same = first == second;
    for (i, (csv, json)) in [first, second].iter().enumerate() {
        std::fs::write(dir.path().join(format!("report{i}.csv")), csv).unwrap();
        std::fs::write(dir.path().join(format!("report{i}.json")), json).unwrap();
    }
    for ext in ["csv", "json"] {
        let a = std::fs::read(dir.path().join(format!("report0.{ext}"))).unwrap();
        let b = std::fs::read(dir.path().join(format!("report1.{ext}"))).unwrap();
        same &= a == b;
    }
    (same, format!("two identical runs gave {} report files", if same { "byte-identical" } else { "different" }))
}

fn main() -> ExitCode {
    let criteria: [(u32, &str, Check); 11] = [
        (1, "Hungarian matches brute force", hungarian_oracle),
        (2, "analytic gradients match finite differences", gradient_suite),
        (3, "dynamic temperature contract", dynamic_temperature_contract),
        (4, "density and prototype invariants", density_and_prototype_invariants),
        (5, "entropy regularizer flattens the mean prediction", entropy_direction),
        (6, "long-tailed split counts", split_exactness),
        (7, "desk-scale end-to-end run", desk_end_to_end),
        (8, "DTS beats the fixed-temperature ablation under MNAR", dts_beats_fixed_temperature),
        (9, "rematching never loses to the fixed matching", rematch_dominates),
        (10, "class-count estimation", class_count_estimate),
        (11, "deterministic report files", deterministic_reports),
    ];
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, check) in criteria {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let (pass, detail) = check();
        let verdict = if pass { "PASS" } else { "FAIL" };
        println!("{verdict} [{id:>2}] {name}: {detail} ({:.1} s)", start.elapsed().as_secs_f64());
        if !pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        if std::env::var_os("ROWSSL_ACCEPTANCE_STRICT").is_some() {
            return ExitCode::FAILURE;
        }
        ExitCode::SUCCESS
    } else {
        ExitCode::SUCCESS
    }
}
