//! Binary checkpoint container.
//!
//! Layout: the magic bytes, a little-endian `u32` header length, a JSON
//! header, a `u32` tensor count, then tensors. Each tensor is a `u32` name
//! length, the UTF-8 name, a `u32` rank, one `u64` per dimension, and the
//! values as little-endian `f64`.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dims, KeyNetwork, Model, TrainConfig, TrainerState};
use crate::error::{Error, Result};
use crate::numerics::net::Affine;
use crate::numerics::{CosineClassifier, Matrix, SgdMomentum, SmallNet};
use crate::queue::FeatureQueue;
use crate::tailedness::{ClassTailQueues, PrototypeBank, UncertaintyVector};

pub const CHECKPOINT_MAGIC: &[u8] = b"ROWSSL-CKPT 1\n";

const MAX_HEADER: usize = 64 << 20;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: TrainConfig,
    dims: Dims,
    encoder_dims: Vec<usize>,
    projector_dims: Vec<usize>,
    step: u64,
    epoch: u64,
    prototype_init_step: Option<u64>,
    uncertainty_iteration: u64,
    has_bank: bool,
    densities_fresh: bool,
    velocity_tensors: usize,
    active_heads: Option<Vec<bool>>,
    train_matching: Option<Vec<Option<usize>>>,
}

struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

fn put_net(out: &mut Vec<(String, Tensor)>, prefix: &str, net: &SmallNet) {
    for (l, layer) in net.layers().iter().enumerate() {
        let (r, c) = layer.weight.shape();
        out.push((
            format!("{prefix}.{l}.weight"),
            Tensor { shape: vec![r, c], data: layer.weight.as_slice().to_vec() },
        ));
        out.push((format!("{prefix}.{l}.bias"), Tensor { shape: vec![r], data: layer.bias.clone() }));
    }
}

fn tensors_of(state: &TrainerState) -> Vec<(String, Tensor)> {
    let mut out = Vec::new();
    put_net(&mut out, "query.encoder", &state.model.encoder);
    put_net(&mut out, "query.projector", &state.model.projector);
    let w = state.model.classifier.weight();
    out.push(("query.classifier".into(), Tensor { shape: vec![w.rows(), w.cols()], data: w.as_slice().to_vec() }));
    put_net(&mut out, "key.encoder", &state.key.encoder);
    put_net(&mut out, "key.projector", &state.key.projector);
    for (i, v) in state.optimizer.velocity().iter().enumerate() {
        out.push((format!("velocity.{i}"), Tensor { shape: vec![v.len()], data: v.clone() }));
    }
    if let Some(bank) = &state.bank {
        let p = bank.prototypes();
        out.push(("prototypes".into(), Tensor { shape: vec![p.rows(), p.cols()], data: p.as_slice().to_vec() }));
        if let Ok(d) = bank.densities() {
            out.push(("densities".into(), Tensor { shape: vec![d.len()], data: d.to_vec() }));
        }
    }
    let u = &state.uncertainty.values;
    out.push(("uncertainty".into(), Tensor { shape: vec![u.len()], data: u.clone() }));
    for c in 0..state.tail_queues.n_classes() {
        let s = state.tail_queues.scores(c);
        out.push((format!("tail.{c}"), Tensor { shape: vec![s.len()], data: s }));
    }
    out
}

pub fn write_checkpoint<W: Write>(state: &TrainerState, mut w: W) -> Result<()> {
    let header = Header {
        config: state.config.clone(),
        dims: state.dims,
        encoder_dims: state.model.encoder.dims(),
        projector_dims: state.model.projector.dims(),
        step: state.step,
        epoch: state.epoch,
        prototype_init_step: state.prototype_init_step,
        uncertainty_iteration: state.uncertainty.iteration,
        has_bank: state.bank.is_some(),
        densities_fresh: state.bank.as_ref().is_some_and(PrototypeBank::has_fresh_densities),
        velocity_tensors: state.optimizer.velocity().len(),
        active_heads: state.active_heads.clone(),
        train_matching: state.train_matching.clone(),
    };
    let json = serde_json::to_vec(&header)?;
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&(json.len() as u32).to_le_bytes())?;
    w.write_all(&json)?;
    let tensors = tensors_of(state);
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for (name, t) in &tensors {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(t.shape.len() as u32).to_le_bytes())?;
        for d in &t.shape {
            w.write_all(&(*d as u64).to_le_bytes())?;
        }
        for v in &t.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_checkpoint(state: &TrainerState, path: impl AsRef<Path>) -> Result<()> {
    write_checkpoint(state, BufWriter::new(File::create(path)?))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|_| corrupt("truncated checkpoint"))?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(|_| corrupt("truncated checkpoint"))?;
    Ok(u64::from_le_bytes(b))
}

struct Store(HashMap<String, Tensor>);

impl Store {
    fn take(&mut self, name: &str, shape: &[usize]) -> Result<Vec<f64>> {
        let t = self.0.remove(name).ok_or_else(|| corrupt(format!("missing tensor {name}")))?;
        if t.shape != shape {
            return Err(corrupt(format!("tensor {name} has shape {:?}, expected {shape:?}", t.shape)));
        }
        Ok(t.data)
    }

    fn take_any(&mut self, name: &str) -> Result<Vec<f64>> {
        let t = self.0.remove(name).ok_or_else(|| corrupt(format!("missing tensor {name}")))?;
        if t.shape.len() != 1 {
            return Err(corrupt(format!("tensor {name} should be a vector")));
        }
        Ok(t.data)
    }

    fn net(&mut self, prefix: &str, dims: &[usize]) -> Result<SmallNet> {
        if dims.len() < 2 {
            return Err(corrupt(format!("{prefix}: bad layer widths {dims:?}")));
        }
        let mut layers = Vec::new();
        for (l, w) in dims.windows(2).enumerate() {
            let weight = self.take(&format!("{prefix}.{l}.weight"), &[w[1], w[0]])?;
            let bias = self.take(&format!("{prefix}.{l}.bias"), &[w[1]])?;
            layers.push(Affine { weight: Matrix::from_vec(w[1], w[0], weight)?, bias });
        }
        SmallNet::from_layers(layers)
    }
}

/// Restores a state. The feature queue comes back empty, so training
/// resumes in queue warmup.
pub fn read_checkpoint<R: Read>(mut r: R) -> Result<TrainerState> {
    let mut magic = vec![0u8; CHECKPOINT_MAGIC.len()];
    r.read_exact(&mut magic).map_err(|_| corrupt("file too short for a checkpoint"))?;
    if magic != CHECKPOINT_MAGIC {
        return Err(corrupt("bad magic bytes; not a ROWSSL-CKPT 1 file"));
    }
    let len = read_u32(&mut r)? as usize;
    if len > MAX_HEADER {
        return Err(corrupt("header length out of range"));
    }
    let mut json = vec![0u8; len];
    r.read_exact(&mut json).map_err(|_| corrupt("truncated header"))?;
    let h: Header = serde_json::from_slice(&json).map_err(|e| corrupt(format!("bad header: {e}")))?;
    h.config.validate()?;

    let count = read_u32(&mut r)?;
    let mut store = Store(HashMap::new());
    for _ in 0..count {
        let n = read_u32(&mut r)? as usize;
        if n > 4096 {
            return Err(corrupt("tensor name too long"));
        }
        let mut name = vec![0u8; n];
        r.read_exact(&mut name).map_err(|_| corrupt("truncated tensor name"))?;
        let name = String::from_utf8(name).map_err(|_| corrupt("tensor name is not UTF-8"))?;
        let rank = read_u32(&mut r)? as usize;
        if rank > 8 {
            return Err(corrupt(format!("tensor {name} has rank {rank}")));
        }
        let shape = (0..rank).map(|_| read_u64(&mut r).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let total =
            shape.iter().try_fold(1usize, |a, d| a.checked_mul(*d)).ok_or_else(|| corrupt("tensor too large"))?;
        let mut bytes = vec![0u8; total.checked_mul(8).ok_or_else(|| corrupt("tensor too large"))?];
        r.read_exact(&mut bytes).map_err(|_| corrupt(format!("truncated tensor {name}")))?;
        let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        store.0.insert(name, Tensor { shape, data });
    }

    let dims = h.dims;
    let encoder = store.net("query.encoder", &h.encoder_dims)?;
    let projector = store.net("query.projector", &h.projector_dims)?;
    let feat = encoder.output_dim();
    if encoder.input_dim() != dims.input_dim || projector.input_dim() != feat {
        return Err(corrupt("network widths disagree with the header"));
    }
    let w = store.take("query.classifier", &[dims.heads, feat])?;
    let classifier = CosineClassifier::from_weight(Matrix::from_vec(dims.heads, feat, w)?);
    let model = Model { encoder, projector, classifier };
    let key = KeyNetwork {
        encoder: store.net("key.encoder", &h.encoder_dims)?,
        projector: store.net("key.projector", &h.projector_dims)?,
    };

    let mut optimizer = SgdMomentum::new(h.config.lr, h.config.momentum)?;
    if h.velocity_tensors > 0 {
        let velocity =
            (0..h.velocity_tensors).map(|i| store.take_any(&format!("velocity.{i}"))).collect::<Result<Vec<_>>>()?;
        optimizer.set_velocity(velocity);
    }

    let bank = if h.has_bank {
        let proj_dim = *h.projector_dims.last().expect("checked above");
        let m = store.0.get("prototypes").map(|t| t.shape.first().copied().unwrap_or(0)).unwrap_or(0);
        let p = store.take("prototypes", &[m, proj_dim])?;
        let densities = if h.densities_fresh { store.take("densities", &[m])? } else { Vec::new() };
        Some(PrototypeBank::from_parts(Matrix::from_vec(m, proj_dim, p)?, densities)?)
    } else {
        None
    };
    let values = store.take("uncertainty", &[dims.heads])?;
    let uncertainty = UncertaintyVector { values, iteration: h.uncertainty_iteration };
    let tails = (0..dims.heads).map(|c| store.take_any(&format!("tail.{c}"))).collect::<Result<Vec<_>>>()?;
    let tail_queues = ClassTailQueues::from_parts(h.config.tail_queue_cap, tails)?;
    if let Some(extra) = store.0.keys().next() {
        return Err(corrupt(format!("unexpected tensor {extra}")));
    }

    Ok(TrainerState {
        queue: FeatureQueue::new(h.config.queue_size)?,
        config: h.config,
        dims,
        model,
        key,
        bank,
        tail_queues,
        uncertainty,
        optimizer,
        step: h.step,
        epoch: h.epoch,
        prototype_init_step: h.prototype_init_step,
        active_heads: h.active_heads,
        train_matching: h.train_matching,
    })
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<TrainerState> {
    read_checkpoint(BufReader::new(File::open(path)?))
}
