//! Lloyd's k-means with k-means++ seeding.
//!
//! Empty clusters are repaired by moving the point that sits farthest from
//! its own centroid (taken from a cluster that keeps at least one member)
//! into the empty cluster and placing the centroid on it.

use rand::Rng;

use super::linalg::{squared_distance, Matrix};
use super::rng::rng_for;
use crate::error::{Error, Result};

pub const MAX_ITERATIONS: usize = 300;
pub const TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub centroids: Matrix,
    pub assignments: Vec<usize>,
    /// Within-cluster sum of squared distances for the returned centroids.
    pub inertia: f64,
    /// Inertia after every centroid update, in order.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
}

fn nearest(point: &[f64], centroids: &Matrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter_rows().enumerate() {
        let d = squared_distance(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn plus_plus_seeds(points: &Matrix, k: usize, seed: u64) -> Matrix {
    let n = points.rows();
    let mut rng = rng_for(&[seed]);
    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng.random_range(0..n));
    let mut d2: Vec<f64> = (0..n).map(|i| squared_distance(points.row(i), points.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, w) in d2.iter().enumerate() {
                acc += w;
                if acc > target && *w > 0.0 {
                    pick = Some(i);
                    break;
                }
            }
            // rounding can leave target just past the running sum
            pick.unwrap_or_else(|| d2.iter().rposition(|w| *w > 0.0).expect("total > 0"))
        } else {
            // every point coincides with a chosen seed
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(squared_distance(points.row(i), points.row(next)));
        }
    }
    let rows: Vec<&[f64]> = chosen.iter().map(|&i| points.row(i)).collect();
    Matrix::from_rows(&rows).expect("rows share a width")
}

/// Clusters the rows of `points` into `k` groups.
pub fn kmeans(points: &Matrix, k: usize, seed: u64) -> Result<KMeansResult> {
    let n = points.rows();
    if k == 0 {
        return Err(Error::invalid("k-means needs k >= 1"));
    }
    if k > n {
        return Err(Error::invalid(format!("k-means: k = {k} exceeds {n} points")));
    }
    let d = points.cols();
    let mut centroids = plus_plus_seeds(points, k, seed);
    let mut assignments = vec![0usize; n];
    let mut history = Vec::new();
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let mut dist = vec![0.0; n];
        let mut counts = vec![0usize; k];
        for i in 0..n {
            let (j, dd) = nearest(points.row(i), &centroids);
            assignments[i] = j;
            dist[i] = dd;
            counts[j] += 1;
        }
        for empty in 0..k {
            if counts[empty] > 0 {
                continue;
            }
            let donor = (0..n)
                .filter(|&i| counts[assignments[i]] > 1)
                .fold(None, |best: Option<usize>, i| match best {
                    Some(b) if dist[b] >= dist[i] => Some(b),
                    _ => Some(i),
                })
                .expect("k <= n leaves a cluster with two members");
            counts[assignments[donor]] -= 1;
            assignments[donor] = empty;
            counts[empty] = 1;
            dist[donor] = 0.0;
            centroids.row_mut(empty).copy_from_slice(points.row(donor));
        }

        let mut sums = Matrix::zeros(k, d);
        for i in 0..n {
            for (s, v) in sums.row_mut(assignments[i]).iter_mut().zip(points.row(i)) {
                *s += v;
            }
        }
        let mut shift: f64 = 0.0;
        for j in 0..k {
            let inv = 1.0 / counts[j] as f64;
            let row = sums.row_mut(j);
            row.iter_mut().for_each(|v| *v *= inv);
            shift = shift.max(squared_distance(row, centroids.row(j)).sqrt());
        }
        centroids = sums;
        let inertia: f64 = (0..n).map(|i| squared_distance(points.row(i), centroids.row(assignments[i]))).sum();
        history.push(inertia);
        if shift < TOLERANCE {
            break;
        }
    }

    let inertia = *history.last().expect("at least one iteration");
    Ok(KMeansResult { centroids, assignments, inertia, inertia_history: history, iterations })
}
