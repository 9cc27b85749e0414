use serde::{Deserialize, Serialize};

use super::net::{Parameters, Trainable};
use crate::error::{Error, Result};

/// SGD with heavy-ball momentum: `v ← μ·v + g`, `θ ← θ − lr·v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdMomentum {
    pub lr: f64,
    pub momentum: f64,
    velocity: Vec<Vec<f64>>,
}

impl SgdMomentum {
    pub fn new(lr: f64, momentum: f64) -> Result<Self> {
        if !(lr >= 0.0) || !(0.0..1.0).contains(&momentum) {
            return Err(Error::invalid(format!(
                "sgd needs lr >= 0 and momentum in [0, 1), got lr={lr} momentum={momentum}"
            )));
        }
        Ok(Self { lr, momentum, velocity: Vec::new() })
    }

    pub fn velocity(&self) -> &[Vec<f64>] {
        &self.velocity
    }

    pub fn set_velocity(&mut self, velocity: Vec<Vec<f64>>) {
        self.velocity = velocity;
    }

    pub fn step<T: Trainable + ?Sized>(&mut self, module: &mut T) -> Result<()> {
        let lr = self.lr;
        let mu = self.momentum;
        let pairs = module.params_and_grads();
        if self.velocity.is_empty() {
            self.velocity = pairs.iter().map(|(p, _)| vec![0.0; p.len()]).collect();
        }
        if self.velocity.len() != pairs.len() || self.velocity.iter().zip(&pairs).any(|(v, (p, _))| v.len() != p.len())
        {
            return Err(Error::invalid("optimizer velocity does not match parameter shapes"));
        }
        for ((param, grad), vel) in pairs.into_iter().zip(self.velocity.iter_mut()) {
            for ((p, g), v) in param.iter_mut().zip(grad).zip(vel.iter_mut()) {
                *v = mu * *v + g;
                *p -= lr * *v;
            }
        }
        Ok(())
    }
}

/// `target ← m·target + (1 − m)·source`, elementwise.
pub fn ema_params<P: Parameters + ?Sized>(target: &mut P, source: &P, momentum: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&momentum) {
        return Err(Error::invalid(format!("ema momentum must be in [0, 1], got {momentum}")));
    }
    let src = source.params();
    let dst = target.params_mut();
    if src.len() != dst.len() || src.iter().zip(&dst).any(|(s, d)| s.len() != d.len()) {
        return Err(Error::invalid("ema: parameter shapes differ"));
    }
    for (d, s) in dst.into_iter().zip(src) {
        for (t, v) in d.iter_mut().zip(s) {
            *t = momentum * *t + (1.0 - momentum) * v;
        }
    }
    Ok(())
}
