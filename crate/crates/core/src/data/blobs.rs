use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{EmbeddingDataset, Sample};
use crate::error::{Error, Result};
use crate::numerics::rng::{rng_for, stream};
use crate::numerics::{normalize_in_place, DenseVector};

/// Isotropic Gaussian blobs around centers on a sphere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlobSpec {
    pub n_classes: usize,
    pub dim: usize,
    /// Radius of the sphere the class centers lie on.
    pub separation: f64,
    pub std: f64,
    pub per_class: usize,
    pub seed: u64,
}

impl BlobSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes == 0 || self.dim == 0 {
            return Err(Error::invalid("blobs need at least one class and dimension"));
        }
        if !(self.separation > 0.0) || !self.separation.is_finite() {
            return Err(Error::invalid(format!("separation must be > 0, got {}", self.separation)));
        }
        if !(self.std > 0.0) || !self.std.is_finite() {
            return Err(Error::invalid(format!("std must be > 0, got {}", self.std)));
        }
        Ok(())
    }
}

pub fn blob_centers(spec: &BlobSpec) -> Vec<Vec<f64>> {
    let mut rng = rng_for(&[stream::BLOB_CENTERS, spec.seed]);
    (0..spec.n_classes)
        .map(|_| {
            let mut c: Vec<f64> = (0..spec.dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            normalize_in_place(&mut c);
            c.iter_mut().for_each(|v| *v *= spec.separation);
            c
        })
        .collect()
}

/// Balanced pool of `per_class` samples per class. Ids run class-major from
/// zero. Every class is treated as known; splitting assigns the real
/// known/novel partition.
pub fn generate_blobs(spec: &BlobSpec) -> Result<EmbeddingDataset> {
    spec.validate()?;
    let centers = blob_centers(spec);
    let noise = Normal::new(0.0, spec.std).map_err(|e| Error::invalid(e.to_string()))?;
    let mut samples = Vec::with_capacity(spec.n_classes * spec.per_class);
    for (class, center) in centers.iter().enumerate() {
        let mut rng = rng_for(&[stream::BLOB_SAMPLES, spec.seed, class as u64]);
        for i in 0..spec.per_class {
            let v: Vec<f64> = center.iter().map(|c| c + noise.sample(&mut rng)).collect();
            samples.push(Sample {
                id: (class * spec.per_class + i) as u64,
                vector: DenseVector::new(v)?,
                label: class,
                labeled: false,
            });
        }
    }
    EmbeddingDataset::new(spec.dim, spec.n_classes, 0, samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::kmeans;
    use crate::numerics::linalg::squared_distance;

    fn spec(n_classes: usize, std: f64, per_class: usize) -> BlobSpec {
        BlobSpec { n_classes, dim: 5, separation: 10.0, std, per_class, seed: 11 }
    }

    #[test]
    fn vanishing_noise_collapses_to_centers() {
        let s = spec(3, 1e-12, 4);
        let ds = generate_blobs(&s).unwrap();
        let centers = blob_centers(&s);
        for smp in ds.samples() {
            assert!(squared_distance(&smp.vector, &centers[smp.label]).sqrt() < 1e-9);
        }
        for c in &centers {
            assert!((crate::numerics::norm(c) - 10.0).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let s = spec(4, 0.5, 10);
        assert_eq!(generate_blobs(&s).unwrap(), generate_blobs(&s).unwrap());
        let mut other = s.clone();
        other.seed += 1;
        assert_ne!(generate_blobs(&s).unwrap(), generate_blobs(&other).unwrap());
    }

    #[test]
    fn two_separated_blobs_are_recovered_by_kmeans() {
        let s = spec(2, 0.1, 50);
        let ds = generate_blobs(&s).unwrap();
        let centers = blob_centers(&s);
        // brute force: every sample is nearest its own center
        for smp in ds.samples() {
            let d: Vec<f64> = centers.iter().map(|c| squared_distance(&smp.vector, c)).collect();
            assert_eq!(crate::numerics::argmax(&d.iter().map(|x| -x).collect::<Vec<_>>()), smp.label);
        }
        let r = kmeans(&ds.to_matrix(), 2, 3).unwrap();
        let first = r.assignments[0];
        for (smp, a) in ds.samples().iter().zip(&r.assignments) {
            assert_eq!(*a == first, smp.label == ds.samples()[0].label);
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(generate_blobs(&spec(2, 0.0, 3)).is_err());
        let mut s = spec(2, 1.0, 3);
        s.separation = -1.0;
        assert!(generate_blobs(&s).is_err());
    }
}
