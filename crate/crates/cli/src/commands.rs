use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use rowssl::data::{generate_blobs, load_dataset, make_long_tailed_split, save_dataset, EmbeddingDataset};
use rowssl::eval::{evaluate_protocols, kmeans_baseline, report_csv, report_json, EvalContext, EvalReport};
use rowssl::trainer::{fit_with, load_checkpoint, save_checkpoint, ClassCountMode, EpochLog, TrainerState};

use crate::config::RunConfig;

pub const POOL_FILE: &str = "pool.emb";
pub const LABELED_FILE: &str = "labeled.emb";
pub const UNLABELED_FILE: &str = "unlabeled.emb";
pub const TEST_FILE: &str = "test.emb";
pub const MANIFEST_FILE: &str = "split_manifest.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.ckpt";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";
pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_JSON: &str = "report.json";

fn prepare_out(cfg: &RunConfig) -> Result<PathBuf> {
    let out = cfg.out_dir();
    fs::create_dir_all(&out).with_context(|| format!("creating output directory {}", out.display()))?;
    cfg.echo(&out)?;
    Ok(out)
}

fn load(path: &Path) -> Result<EmbeddingDataset> {
    if !path.exists() {
        return Err(anyhow!("missing input {}", path.display()));
    }
    load_dataset(path).with_context(|| format!("loading {}", path.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn counts_line(ds: &EmbeddingDataset) -> String {
    let counts: Vec<String> = ds.class_counts().iter().map(usize::to_string).collect();
    counts.join(" ")
}

pub fn synth(cfg: &RunConfig) -> Result<()> {
    let spec = cfg.blobs()?;
    let out = prepare_out(cfg)?;
    let ds = generate_blobs(spec)?;
    let path = out.join(POOL_FILE);
    save_dataset(&ds, &path).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}: N={} d={}", path.display(), ds.len(), ds.dim());
    println!("class counts: {}", counts_line(&ds));
    Ok(())
}

pub fn split(cfg: &RunConfig, pool: Option<&Path>) -> Result<()> {
    let spec = cfg.split()?;
    let out = prepare_out(cfg)?;
    let pool_path = pool.map_or_else(|| out.join(POOL_FILE), Path::to_path_buf);
    let pool = load(&pool_path)?;
    let s = make_long_tailed_split(&pool, spec)?;
    for (name, ds) in [(LABELED_FILE, &s.labeled), (UNLABELED_FILE, &s.unlabeled), (TEST_FILE, &s.test)] {
        save_dataset(ds, out.join(name)).with_context(|| format!("writing {name}"))?;
    }
    write_text(&out.join(MANIFEST_FILE), &(serde_json::to_string_pretty(&s.manifest)? + "\n"))?;
    let m = &s.manifest;
    let mode = serde_json::to_value(m.mode)?;
    println!("mode {}, gamma_l {}, gamma_u {}", mode.as_str().unwrap_or("?"), m.gamma_l, m.gamma_u);
    println!("labeled counts:   {:?}", m.labeled_counts);
    println!("unlabeled counts: {:?}", m.unlabeled_counts);
    println!("test counts:      {:?}", m.test_counts);
    Ok(())
}

struct EvalInputs {
    unlabeled: EmbeddingDataset,
    test: EmbeddingDataset,
    ctx: EvalContext,
}

fn eval_inputs(dir: &Path) -> Result<EvalInputs> {
    let labeled = load(&dir.join(LABELED_FILE))?;
    let unlabeled = load(&dir.join(UNLABELED_FILE))?;
    let test = load(&dir.join(TEST_FILE))?;
    let ctx = EvalContext::from_train(&labeled.concat(&unlabeled)?);
    Ok(EvalInputs { unlabeled, test, ctx })
}

fn log_header() -> String {
    let mut h = String::from("epoch,steps,lr,tau_t");
    for (name, _) in rowssl::losses::LossBreakdown::default().fields() {
        h.push(',');
        h.push_str(name);
    }
    h.push('\n');
    h
}

fn log_row(e: &EpochLog) -> String {
    let mut row = format!("{},{},{},{}", e.epoch, e.steps, e.lr, e.tau_t);
    for (_, v) in e.loss.fields() {
        let _ = write!(row, ",{v}");
    }
    row.push('\n');
    row
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    let out = prepare_out(cfg)?;
    let labeled = load(&out.join(LABELED_FILE))?;
    let unlabeled = load(&out.join(UNLABELED_FILE))?;
    let train_set = labeled.concat(&unlabeled)?;
    let protocols = cfg.parsed_protocols()?;
    let snapshots = if cfg.eval_every > 0 {
        let dir = out.join("snapshots");
        fs::create_dir_all(&dir)?;
        Some((dir, eval_inputs(&out)?))
    } else {
        None
    };

    let (mut state, log) = fit_with(&train_set, cfg.train.clone(), |state, e| {
        eprintln!("epoch {:>4}  lr {:.5}  tau_t {:.4}  loss {:.5}", e.epoch, e.lr, e.tau_t, e.loss.total);
        if let Some((dir, inp)) = &snapshots {
            if e.epoch % cfg.eval_every == 0 {
                let mut frozen = state.clone();
                let reports = evaluate_protocols(&mut frozen, &inp.unlabeled, &inp.test, &protocols, &inp.ctx)?;
                let path = dir.join(format!("eval_epoch_{:04}.csv", e.epoch));
                fs::write(&path, report_csv(&reports))?;
            }
        }
        Ok(())
    })?;

    if state.config().class_count == ClassCountMode::Estimate {
        let est = state.estimate_class_count(&train_set)?;
        println!("estimated class count: {} of {} heads", est.count, est.active.len());
        write_text(&out.join("class_count.json"), &(serde_json::to_string_pretty(&est)? + "\n"))?;
        state.set_active_heads(Some(est.active))?;
    }

    let mut csv = log_header();
    for e in &log.epochs {
        csv.push_str(&log_row(e));
    }
    write_text(&out.join(TRAIN_LOG_FILE), &csv)?;
    let ckpt = out.join(CHECKPOINT_FILE);
    save_checkpoint(&state, &ckpt).with_context(|| format!("writing {}", ckpt.display()))?;
    println!("wrote {} after {} steps", ckpt.display(), state.step());
    if let Some(last) = log.epochs.last() {
        println!("final loss {:.6}", last.loss.total);
    }
    Ok(())
}

pub struct EvalArgs {
    pub checkpoint: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub baseline: bool,
}

pub fn eval(cfg: &RunConfig, args: &EvalArgs) -> Result<Vec<EvalReport>> {
    let out = prepare_out(cfg)?;
    let ckpt = args.checkpoint.clone().unwrap_or_else(|| out.join(CHECKPOINT_FILE));
    if !ckpt.exists() {
        return Err(anyhow!("missing checkpoint {}; run `rowssl train` first", ckpt.display()));
    }
    let mut state: TrainerState = load_checkpoint(&ckpt).with_context(|| format!("loading {}", ckpt.display()))?;
    let data_dir = args.data.clone().unwrap_or_else(|| out.clone());
    let protocols = cfg.parsed_protocols()?;
    let inp = eval_inputs(&data_dir).context(
        "evaluation needs the labeled, unlabeled, and test files; the unlabeled train set also supplies \
         the head-to-class matching used by test-inductive",
    )?;

    let mut reports = evaluate_protocols(&mut state, &inp.unlabeled, &inp.test, &protocols, &inp.ctx)?;
    if args.baseline {
        let k = inp.ctx.n_classes();
        reports.push(kmeans_baseline(&inp.unlabeled, k, cfg.seed, &inp.ctx)?);
    }
    write_text(&out.join(REPORT_CSV), &report_csv(&reports))?;
    write_text(&out.join(REPORT_JSON), &(serde_json::to_string_pretty(&report_json(&reports))? + "\n"))?;
    for r in &reports {
        let acc = r.scores.acc(rowssl::eval::Group::All);
        let bacc = r.scores.bacc(rowssl::eval::Group::All);
        println!("{:<16} ACC {}  bACC {}", r.protocol, fmt_opt(acc), fmt_opt(bacc));
    }
    Ok(reports)
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |v| format!("{v:.4}"))
}
