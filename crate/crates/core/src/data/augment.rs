use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::numerics::rng::{rng_for, stream};

/// Two independently perturbed copies of one vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewPair {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
}

fn one_view(x: &[f64], noise_scale: f64, drop_fraction: f64, parts: &[u64]) -> Vec<f64> {
    let mut rng = rng_for(parts);
    x.iter()
        .map(|v| {
            let noise: f64 = StandardNormal.sample(&mut rng);
            let dropped = drop_fraction > 0.0 && rng.random::<f64>() < drop_fraction;
            if dropped {
                0.0
            } else {
                v + noise_scale * noise
            }
        })
        .collect()
}

/// Additive Gaussian noise plus random coordinate dropout. The draws depend
/// only on `(seed, sample_id, step)`.
pub fn two_views(x: &[f64], noise_scale: f64, drop_fraction: f64, sample_id: u64, step: u64, seed: u64) -> ViewPair {
    ViewPair {
        first: one_view(x, noise_scale, drop_fraction, &[stream::VIEWS, seed, sample_id, step, 0]),
        second: one_view(x, noise_scale, drop_fraction, &[stream::VIEWS, seed, sample_id, step, 1]),
    }
}

/// Epoch-seeded shuffle of `0..n` chunked into batches; the last batch may
/// be short.
pub fn iterate_batches(n: usize, batch_size: usize, seed: u64, epoch: u64) -> Vec<Vec<usize>> {
    let batch_size = batch_size.max(1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_for(&[stream::SHUFFLE, seed, epoch]));
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}
