//! The training loop: two views per sample, a query network trained by SGD,
//! an EMA key network feeding a feature queue, tailedness-driven
//! temperatures, and uncertainty-adjusted self-distillation.

mod checkpoint;
mod model;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use model::{KeyNetwork, Model, ObjectiveConfig, ObjectiveInputs};

use serde::{Deserialize, Serialize};

use crate::data::{iterate_batches, two_views, EmbeddingDataset, Sample};
use crate::error::{Error, Result};
use crate::losses::{dynamic_temperature, soft_pseudo_label, LossBreakdown, RepConfig};
use crate::numerics::rng::{mix_seed, rng_for, stream};
use crate::numerics::{argmax, CosineClassifier, CosineSchedule, Matrix, SgdMomentum, SmallNet, Trainable};
use crate::queue::{FeatureQueue, QueueSnapshot, UNLABELED};
use crate::tailedness::{
    class_uncertainty, init_prototypes, tailedness_scores, update_prototypes, ClassTailQueues, PrototypeBank,
    UncertaintyVector,
};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassCountMode {
    /// One head per true class.
    #[default]
    Known,
    /// Start with `initial_classes` heads and prune the unused ones later.
    Estimate,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Tailedness-driven temperatures and uncertainty-adjusted targets.
    #[default]
    Dts,
    /// Constant InfoNCE temperature `(tau_min + tau_max) / 2`, plain
    /// sharpened targets, no prototypes.
    FixedTemperature,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Learning rate reached at the end of the cosine decay.
    pub lr_min: f64,
    pub momentum: f64,
    pub lambda_rep: f64,
    pub tau_s: f64,
    pub tau_t_start: f64,
    pub tau_t_end: f64,
    pub tau_t_warmup_epochs: usize,
    pub epsilon: f64,
    /// Prototype count; defaults to the number of classifier heads.
    pub prototypes: Option<usize>,
    pub lambda_tail: f64,
    pub queue_size: usize,
    pub knn_k: usize,
    pub tau_min: f64,
    pub tau_max: f64,
    pub lambda_var: f64,
    pub tau_sup: f64,
    pub key_momentum: f64,
    pub class_count: ClassCountMode,
    /// Head count in estimate mode; defaults to twice the class count.
    pub initial_classes: Option<usize>,
    pub method: Method,
    pub seed: u64,
    /// Hidden widths of the encoder.
    pub encoder_hidden: Vec<usize>,
    /// Encoder output width; defaults to the input width.
    pub feature_dim: Option<usize>,
    /// A single square encoder layer starts at the identity.
    pub identity_init: bool,
    pub projector_hidden: usize,
    pub projection_dim: usize,
    pub noise_scale: f64,
    pub drop_fraction: f64,
    pub tail_queue_cap: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 128,
            lr: 0.1,
            lr_min: 1e-4,
            momentum: 0.9,
            lambda_rep: 0.35,
            tau_s: 0.1,
            tau_t_start: 0.07,
            tau_t_end: 0.04,
            tau_t_warmup_epochs: 30,
            epsilon: 4.0,
            prototypes: None,
            lambda_tail: 0.9,
            queue_size: 4096,
            knn_k: 15,
            tau_min: 0.05,
            tau_max: 1.0,
            lambda_var: 1.0,
            tau_sup: 0.07,
            key_momentum: 0.999,
            class_count: ClassCountMode::Known,
            initial_classes: None,
            method: Method::Dts,
            seed: 0,
            encoder_hidden: Vec::new(),
            feature_dim: None,
            identity_init: true,
            projector_hidden: 256,
            projection_dim: 256,
            noise_scale: 0.1,
            drop_fraction: 0.1,
            tail_queue_cap: 256,
        }
    }
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Validation(msg()))
    }
}

fn positive(v: f64) -> bool {
    v > 0.0 && v.is_finite()
}

fn unit_interval(v: f64) -> bool {
    (0.0..=1.0).contains(&v)
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        check(self.batch_size >= 1, || "batch_size must be >= 1".into())?;
        check(self.lr >= 0.0 && self.lr.is_finite(), || format!("lr must be >= 0, got {}", self.lr))?;
        check(self.lr_min >= 0.0 && self.lr_min <= self.lr.max(0.0), || {
            format!("lr_min must lie in [0, lr], got {}", self.lr_min)
        })?;
        check((0.0..1.0).contains(&self.momentum), || "momentum must lie in [0, 1)".into())?;
        check(unit_interval(self.lambda_rep), || "lambda_rep must lie in [0, 1]".into())?;
        check(positive(self.tau_s), || "tau_s must be > 0".into())?;
        check(positive(self.tau_t_start) && positive(self.tau_t_end), || "teacher temperatures must be > 0".into())?;
        check(self.epsilon >= 0.0 && self.epsilon.is_finite(), || "epsilon must be >= 0".into())?;
        check(self.prototypes != Some(0), || "prototypes must be >= 1".into())?;
        check(unit_interval(self.lambda_tail), || "lambda_tail must lie in [0, 1]".into())?;
        check(self.queue_size >= 1, || "queue_size must be >= 1".into())?;
        check(self.knn_k >= 1 && self.knn_k <= self.queue_size, || {
            format!("knn_k must lie in [1, queue_size], got {}", self.knn_k)
        })?;
        check(positive(self.tau_min) && self.tau_max >= self.tau_min && self.tau_max.is_finite(), || {
            format!("need 0 < tau_min <= tau_max, got {} and {}", self.tau_min, self.tau_max)
        })?;
        check(self.lambda_var >= 0.0 && self.lambda_var.is_finite(), || "lambda_var must be >= 0".into())?;
        check(positive(self.tau_sup), || "tau_sup must be > 0".into())?;
        check(unit_interval(self.key_momentum), || "key_momentum must lie in [0, 1]".into())?;
        check(self.initial_classes != Some(0), || "initial_classes must be >= 1".into())?;
        check(self.encoder_hidden.iter().all(|h| *h > 0), || "encoder_hidden widths must be > 0".into())?;
        check(self.feature_dim != Some(0), || "feature_dim must be > 0".into())?;
        check(self.projector_hidden > 0 && self.projection_dim > 0, || "projector widths must be > 0".into())?;
        check(self.noise_scale >= 0.0 && self.noise_scale.is_finite(), || "noise_scale must be >= 0".into())?;
        check((0.0..1.0).contains(&self.drop_fraction), || "drop_fraction must lie in [0, 1)".into())?;
        check(self.tail_queue_cap >= 1, || "tail_queue_cap must be >= 1".into())?;
        if let Some(m) = self.prototypes {
            check(m <= self.queue_size, || "prototypes cannot exceed queue_size".into())?;
        }
        Ok(())
    }

    pub fn heads(&self, n_classes: usize) -> usize {
        match self.class_count {
            ClassCountMode::Known => n_classes,
            ClassCountMode::Estimate => self.initial_classes.unwrap_or(2 * n_classes),
        }
    }

    pub fn objective(&self) -> ObjectiveConfig {
        ObjectiveConfig {
            rep: RepConfig { lambda_rep: self.lambda_rep, tau_sup: self.tau_sup },
            tau_s: self.tau_s,
            epsilon: self.epsilon,
            use_representation: true,
            use_classifier: true,
        }
    }
}

/// Shapes fixed when a state is created.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub input_dim: usize,
    pub known_classes: usize,
    pub n_classes: usize,
    pub heads: usize,
    pub steps_per_epoch: u64,
}

#[derive(Debug, Clone)]
pub struct TrainerState {
    pub(crate) config: TrainConfig,
    pub(crate) dims: Dims,
    pub(crate) model: Model,
    pub(crate) key: KeyNetwork,
    pub(crate) queue: FeatureQueue,
    pub(crate) bank: Option<PrototypeBank>,
    pub(crate) tail_queues: ClassTailQueues,
    pub(crate) uncertainty: UncertaintyVector,
    pub(crate) optimizer: SgdMomentum,
    pub(crate) step: u64,
    pub(crate) epoch: u64,
    pub(crate) prototype_init_step: Option<u64>,
    pub(crate) active_heads: Option<Vec<bool>>,
    pub(crate) train_matching: Option<Vec<Option<usize>>>,
}

/// Step inputs that do not depend on the query parameters being optimized.
#[derive(Debug, Clone)]
pub struct PreparedBatch {
    pub view_a: Matrix,
    pub view_b: Matrix,
    pub labels: Vec<Option<usize>>,
    pub keys: Matrix,
    /// Queue contents before this batch is pushed.
    pub queue: QueueSnapshot,
    /// Tailedness of each key, once prototypes exist.
    pub scores: Option<Vec<f64>>,
    pub temperatures: Vec<f64>,
    pub targets_a: Matrix,
    pub targets_b: Matrix,
}

impl PreparedBatch {
    pub fn inputs(&self) -> ObjectiveInputs<'_> {
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

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: u64,
    pub steps: u64,
    pub lr: f64,
    pub tau_t: f64,
    /// Batch means of each loss component.
    pub loss: LossBreakdown,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochLog>,
    pub prototype_init_step: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCountEstimate {
    pub count: usize,
    pub active: Vec<bool>,
}

fn build_encoder(config: &TrainConfig, input_dim: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Result<SmallNet> {
    let feature_dim = config.feature_dim.unwrap_or(input_dim);
    let mut dims = vec![input_dim];
    dims.extend(&config.encoder_hidden);
    dims.push(feature_dim);
    let mut net = SmallNet::new(&dims, rng)?;
    if config.identity_init && dims.len() == 2 && feature_dim == input_dim {
        let mut layers = net.layers().to_vec();
        let w = &mut layers[0].weight;
        w.as_mut_slice().fill(0.0);
        for i in 0..input_dim {
            w.set(i, i, 1.0);
        }
        net = SmallNet::from_layers(layers)?;
    }
    Ok(net)
}

impl TrainerState {
    /// Fresh state for data with `input_dim` features, `known_classes`
    /// labeled classes out of `n_classes`, and `n_train` training samples.
    pub fn new(
        config: TrainConfig,
        input_dim: usize,
        known_classes: usize,
        n_classes: usize,
        n_train: usize,
    ) -> Result<Self> {
        config.validate()?;
        if input_dim == 0 || n_classes == 0 || known_classes > n_classes {
            return Err(Error::invalid(format!(
                "bad problem shape: dim {input_dim}, {known_classes} known of {n_classes} classes"
            )));
        }
        let heads = config.heads(n_classes);
        if heads < known_classes {
            return Err(Error::Validation(format!(
                "{heads} classifier heads cannot cover {known_classes} known classes"
            )));
        }
        let prototypes = config.prototypes.unwrap_or(heads);
        if prototypes > config.queue_size {
            return Err(Error::Validation(format!("{prototypes} prototypes exceed queue_size {}", config.queue_size)));
        }
        let steps_per_epoch = n_train.div_ceil(config.batch_size) as u64;
        let mut rng = rng_for(&[stream::INIT, config.seed]);
        let encoder = build_encoder(&config, input_dim, &mut rng)?;
        let feature_dim = encoder.output_dim();
        let projector = SmallNet::new(&[feature_dim, config.projector_hidden, config.projection_dim], &mut rng)?;
        let classifier = CosineClassifier::new(heads, feature_dim, &mut rng)?;
        let model = Model { encoder, projector, classifier };
        let key = KeyNetwork::from_model(&model);
        Ok(Self {
            dims: Dims { input_dim, known_classes, n_classes, heads, steps_per_epoch },
            queue: FeatureQueue::new(config.queue_size)?,
            bank: None,
            tail_queues: ClassTailQueues::new(heads, config.tail_queue_cap)?,
            uncertainty: UncertaintyVector::zeros(heads),
            optimizer: SgdMomentum::new(config.lr, config.momentum)?,
            step: 0,
            epoch: 0,
            prototype_init_step: None,
            active_heads: None,
            train_matching: None,
            model,
            key,
            config,
        })
    }

    pub fn for_dataset(config: TrainConfig, dataset: &EmbeddingDataset) -> Result<Self> {
        Self::new(config, dataset.dim(), dataset.known_classes(), dataset.n_classes(), dataset.len())
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn model_mut(&mut self) -> &mut Model {
        &mut self.model
    }

    pub fn key_network(&self) -> &KeyNetwork {
        &self.key
    }

    pub fn queue(&self) -> &FeatureQueue {
        &self.queue
    }

    pub fn prototype_bank(&self) -> Option<&PrototypeBank> {
        self.bank.as_ref()
    }

    pub fn tail_queues(&self) -> &ClassTailQueues {
        &self.tail_queues
    }

    pub fn uncertainty(&self) -> &UncertaintyVector {
        &self.uncertainty
    }

    pub fn optimizer(&self) -> &SgdMomentum {
        &self.optimizer
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn prototype_init_step(&self) -> Option<u64> {
        self.prototype_init_step
    }

    pub fn active_heads(&self) -> Option<&[bool]> {
        self.active_heads.as_deref()
    }

    pub fn set_active_heads(&mut self, mask: Option<Vec<bool>>) -> Result<()> {
        if let Some(m) = &mask {
            if m.len() != self.dims.heads || !m.iter().any(|a| *a) {
                return Err(Error::invalid("active-head mask must match the head count and keep one head"));
            }
        }
        self.active_heads = mask;
        Ok(())
    }

    /// Head-to-class matching found on the unlabeled training set.
    pub fn train_matching(&self) -> Option<&[Option<usize>]> {
        self.train_matching.as_deref()
    }

    pub fn set_train_matching(&mut self, matching: Option<Vec<Option<usize>>>) -> Result<()> {
        if let Some(m) = &matching {
            if m.len() != self.dims.heads {
                return Err(Error::invalid("matching must have one entry per head"));
            }
        }
        self.train_matching = matching;
        Ok(())
    }

    /// Empties the feature queue. Prototypes and densities are kept, as after
    /// loading a checkpoint.
    pub fn reset_queue(&mut self) {
        self.queue.clear();
    }

    /// Every classifier row is finite with norm at least 1e-8.
    pub fn classifier_rows_ok(&self) -> bool {
        let w = self.model.classifier.weight();
        w.all_finite() && self.model.classifier.min_row_norm() >= 1e-8
    }

    pub fn in_queue_warmup(&self) -> bool {
        !self.queue.is_full()
    }

    fn total_steps(&self) -> u64 {
        self.config.epochs as u64 * self.dims.steps_per_epoch
    }

    pub fn learning_rate(&self) -> f64 {
        CosineSchedule::new(self.config.lr, self.config.lr_min, self.total_steps()).value(self.step)
    }

    pub fn teacher_temperature(&self) -> f64 {
        let warm = self.config.tau_t_warmup_epochs as u64 * self.dims.steps_per_epoch;
        CosineSchedule::new(self.config.tau_t_start, self.config.tau_t_end, warm).value(self.step)
    }

    fn prototype_count(&self) -> usize {
        self.config.prototypes.unwrap_or(self.dims.heads)
    }

    fn check_batch(&self, batch: &[&Sample]) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        for s in batch {
            if s.vector.dim() != self.dims.input_dim {
                return Err(Error::invalid(format!(
                    "sample {} has dimension {}, expected {}",
                    s.id,
                    s.vector.dim(),
                    self.dims.input_dim
                )));
            }
            if s.labeled && s.label >= self.dims.known_classes {
                return Err(Error::invalid(format!("labeled sample {} has novel class {}", s.id, s.label)));
            }
        }
        Ok(())
    }

    /// Views, keys, temperatures, and teacher targets for `batch` at the
    /// current step. Nothing in the state changes.
    pub fn prepare(&self, batch: &[&Sample]) -> Result<PreparedBatch> {
        self.check_batch(batch)?;
        let cfg = &self.config;
        let dts = cfg.method == Method::Dts;
        let b = batch.len();
        let d = self.dims.input_dim;
        let heads = self.dims.heads;

        let mut view_a = Matrix::zeros(b, d);
        let mut view_b = Matrix::zeros(b, d);
        for (i, s) in batch.iter().enumerate() {
            let v = two_views(&s.vector, cfg.noise_scale, cfg.drop_fraction, s.id, self.step, cfg.seed);
            view_a.row_mut(i).copy_from_slice(&v.first);
            view_b.row_mut(i).copy_from_slice(&v.second);
        }
        let labels: Vec<Option<usize>> = batch.iter().map(|s| s.labeled.then_some(s.label)).collect();

        // keys come from the other view through the EMA network
        let keys = self.key.embed(&view_b)?;
        if !keys.all_finite() {
            return Err(Error::NonFinite("key embeddings".into()));
        }

        let scores = match &self.bank {
            Some(bank) if dts && bank.has_fresh_densities() => Some(tailedness_scores(&keys, bank)?),
            _ => None,
        };
        let temperatures: Vec<f64> = match &scores {
            Some(s) => {
                let dens = self.bank.as_ref().expect("scores imply a bank").densities()?;
                s.iter().map(|si| dynamic_temperature(*si, dens, cfg.tau_min, cfg.tau_max)).collect::<Result<_>>()?
            }
            None => vec![0.5 * (cfg.tau_min + cfg.tau_max); b],
        };

        // each view's prediction is supervised by the teacher on the other
        let tau_t = self.teacher_temperature();
        let zero_u = vec![0.0; heads];
        let (u, lambda_var) = if dts { (&self.uncertainty.values, cfg.lambda_var) } else { (&zero_u, 0.0) };
        let teacher_a = self.model.logits(&view_a)?;
        let teacher_b = self.model.logits(&view_b)?;
        let mut targets_a = Matrix::zeros(b, heads);
        let mut targets_b = Matrix::zeros(b, heads);
        for i in 0..b {
            match labels[i] {
                Some(c) => {
                    targets_a.set(i, c, 1.0);
                    targets_b.set(i, c, 1.0);
                }
                None => {
                    let qa = soft_pseudo_label(teacher_b.row(i), u, lambda_var, tau_t)?;
                    let qb = soft_pseudo_label(teacher_a.row(i), u, lambda_var, tau_t)?;
                    targets_a.row_mut(i).copy_from_slice(&qa);
                    targets_b.row_mut(i).copy_from_slice(&qb);
                }
            }
        }
        if !targets_a.all_finite() || !targets_b.all_finite() {
            return Err(Error::NonFinite("soft pseudo-labels".into()));
        }
        Ok(PreparedBatch {
            view_a,
            view_b,
            labels,
            keys,
            queue: self.queue.snapshot(),
            scores,
            temperatures,
            targets_a,
            targets_b,
        })
    }

    /// One optimization step on `batch`.
    pub fn train_step(&mut self, batch: &[&Sample]) -> Result<LossBreakdown> {
        let prep = self.prepare(batch)?;
        let cfg = self.config.clone();
        let dts = cfg.method == Method::Dts;
        let breakdown = self.model.objective(&prep.inputs(), &cfg.objective())?;
        if let Some(name) = breakdown.first_non_finite() {
            return Err(Error::NonFinite(format!("loss component {name}")));
        }

        // optimizer
        self.optimizer.lr = self.learning_rate();
        self.optimizer.step(&mut self.model)?;
        self.model.zero_grad();
        if !self.model.all_finite() {
            return Err(Error::NonFinite("query network parameters after the update".into()));
        }

        self.key.follow(&self.model, cfg.key_momentum)?;

        let PreparedBatch { labels, keys, scores, targets_a, .. } = prep;
        let b = labels.len();
        let queue_labels: Vec<i64> = labels.iter().map(|l| l.map_or(UNLABELED, |c| c as i64)).collect();
        self.queue.push_batch(&keys, &queue_labels)?;

        if dts {
            let after = self.queue.snapshot();
            match &mut self.bank {
                None if self.queue.is_full() => {
                    let seed = mix_seed(&[stream::PROTOTYPES, cfg.seed, self.step]);
                    let mut bank = init_prototypes(&after, self.prototype_count(), seed)?;
                    bank.refresh_densities(&after, cfg.knn_k)?;
                    self.bank = Some(bank);
                    self.prototype_init_step = Some(self.step);
                }
                None => {}
                Some(bank) => update_prototypes(bank, &after, cfg.lambda_tail, cfg.knn_k)?,
            }

            if let Some(s) = &scores {
                let assigned: Vec<usize> =
                    (0..b).map(|i| labels[i].unwrap_or_else(|| argmax(targets_a.row(i)))).collect();
                self.tail_queues.update(s, &assigned)?;
            }
            self.uncertainty = class_uncertainty(&self.tail_queues, self.step);
        }

        self.step += 1;
        Ok(breakdown)
    }

    /// Runs whole epochs until `config.epochs` is reached, calling
    /// `on_epoch` after each.
    pub fn train_until_done<F>(&mut self, dataset: &EmbeddingDataset, mut on_epoch: F) -> Result<Vec<EpochLog>>
    where
        F: FnMut(&TrainerState, &EpochLog) -> Result<()>,
    {
        let spe = dataset.len().div_ceil(self.config.batch_size) as u64;
        if spe != self.dims.steps_per_epoch {
            return Err(Error::invalid(format!(
                "dataset gives {spe} steps per epoch but the state was built for {}",
                self.dims.steps_per_epoch
            )));
        }
        let mut logs = Vec::new();
        while (self.epoch as usize) < self.config.epochs {
            let log = self.train_epoch(dataset)?;
            on_epoch(self, &log)?;
            logs.push(log);
        }
        Ok(logs)
    }

    /// One pass over `dataset` in a seed- and epoch-dependent order.
    pub fn train_epoch(&mut self, dataset: &EmbeddingDataset) -> Result<EpochLog> {
        let samples = dataset.samples();
        let batches = iterate_batches(samples.len(), self.config.batch_size, self.config.seed, self.epoch);
        let mut sum = [0.0; 7];
        let mut lr = self.learning_rate();
        let mut tau_t = self.teacher_temperature();
        for idx in &batches {
            lr = self.learning_rate();
            tau_t = self.teacher_temperature();
            let batch: Vec<&Sample> = idx.iter().map(|&i| &samples[i]).collect();
            let l = self.train_step(&batch)?;
            for (acc, (_, v)) in sum.iter_mut().zip(l.fields()) {
                *acc += v;
            }
        }
        let n = batches.len().max(1) as f64;
        let loss = LossBreakdown {
            l_u: sum[0] / n,
            l_sup: sum[1] / n,
            l_rep: sum[2] / n,
            l_cls: sum[3] / n,
            entropy: sum[4] / n,
            loss_cls: sum[5] / n,
            total: sum[6] / n,
        };
        let log = EpochLog { epoch: self.epoch, steps: batches.len() as u64, lr, tau_t, loss };
        self.epoch += 1;
        Ok(log)
    }

    /// Assigns every sample to its argmax head; heads that receive nothing
    /// are inactive.
    pub fn estimate_class_count(&self, dataset: &EmbeddingDataset) -> Result<ClassCountEstimate> {
        let preds = self.model.predict(&dataset.to_matrix(), None)?;
        let mut active = vec![false; self.dims.heads];
        for p in preds {
            active[p] = true;
        }
        Ok(ClassCountEstimate { count: active.iter().filter(|a| **a).count(), active })
    }
}

/// Builds a state for `dataset` and trains it for `config.epochs`.
pub fn fit(dataset: &EmbeddingDataset, config: TrainConfig) -> Result<(TrainerState, TrainingLog)> {
    fit_with(dataset, config, |_, _| Ok(()))
}

pub fn fit_with<F>(dataset: &EmbeddingDataset, config: TrainConfig, on_epoch: F) -> Result<(TrainerState, TrainingLog)>
where
    F: FnMut(&TrainerState, &EpochLog) -> Result<()>,
{
    if dataset.is_empty() {
        return Err(Error::invalid("cannot train on an empty dataset"));
    }
    let mut state = TrainerState::for_dataset(config, dataset)?;
    let epochs = state.train_until_done(dataset, on_epoch)?;
    let log = TrainingLog { epochs, prototype_init_step: state.prototype_init_step };
    Ok((state, log))
}

pub fn estimate_class_count(state: &TrainerState, dataset: &EmbeddingDataset) -> Result<ClassCountEstimate> {
    state.estimate_class_count(dataset)
}
