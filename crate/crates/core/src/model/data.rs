use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, tag};

/// Labelled feature vectors stored row-major in one flat buffer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    features: Vec<f32>,
    labels: Vec<u32>,
    dim: usize,
    num_classes: usize,
}

impl Dataset {
    pub fn new(features: Vec<f32>, labels: Vec<u32>, dim: usize, num_classes: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("feature dimension must be positive"));
        }
        if features.len() != labels.len() * dim {
            return Err(Error::DimensionMismatch { expected: labels.len() * dim, found: features.len() });
        }
        if let Some(&l) = labels.iter().find(|&&l| l as usize >= num_classes) {
            return Err(Error::invalid(format!("label {l} not below num_classes {num_classes}")));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite feature"));
        }
        Ok(Self { features, labels, dim, num_classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    pub fn sample(&self, i: usize) -> (&[f32], u32) {
        (&self.features[i * self.dim..(i + 1) * self.dim], self.labels[i])
    }

    /// Rows picked by index, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            let (x, y) = self.sample(i);
            features.extend_from_slice(x);
            labels.push(y);
        }
        Dataset { features, labels, dim: self.dim, num_classes: self.num_classes }
    }

    /// Concatenation of datasets sharing a dimension and class count.
    pub fn concat<'a>(parts: impl IntoIterator<Item = &'a Dataset>) -> Result<Dataset> {
        let mut iter = parts.into_iter();
        let first = iter.next().ok_or(Error::EmptyDataset)?.clone();
        iter.try_fold(first, |mut acc, d| {
            if d.dim != acc.dim || d.num_classes != acc.num_classes {
                return Err(Error::invalid("cannot concatenate datasets of different shape"));
            }
            acc.features.extend_from_slice(&d.features);
            acc.labels.extend_from_slice(&d.labels);
            Ok(acc)
        })
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }

    /// Little-endian bytes of features then labels; used for hashing.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.features.len() * 4 + self.labels.len() * 4);
        out.extend(self.features.iter().flat_map(|v| v.to_le_bytes()));
        out.extend(self.labels.iter().flat_map(|v| v.to_le_bytes()));
        out
    }
}

/// Gaussian blobs, one per class, `samples_per_class` each in class-major
/// order. Class `c` is centred at a point drawn from a stream keyed by
/// `(seed, c)` uniformly in [-2, 2]^feature_dim.
pub fn make_synthetic_dataset(
    num_classes: usize,
    samples_per_class: usize,
    feature_dim: usize,
    cluster_spread: f64,
    seed: u64,
) -> Result<Dataset> {
    if feature_dim == 0 {
        return Err(Error::invalid("feature_dim must be positive"));
    }
    if num_classes == 0 || samples_per_class == 0 {
        return Err(Error::invalid("class and sample counts must be positive"));
    }
    if !(cluster_spread.is_finite() && cluster_spread >= 0.0) {
        return Err(Error::invalid("cluster_spread must be finite and non-negative"));
    }
    let mut features = Vec::with_capacity(num_classes * samples_per_class * feature_dim);
    let mut labels = Vec::with_capacity(num_classes * samples_per_class);
    for c in 0..num_classes {
        let mut center_rng = rng::stream(&[tag::DATA, seed, c as u64, 0]);
        let center: Vec<f64> = (0..feature_dim).map(|_| center_rng.random_range(-2.0..2.0)).collect();
        let mut noise = rng::stream(&[tag::DATA, seed, c as u64, 1]);
        for _ in 0..samples_per_class {
            for &m in &center {
                let z: f64 = noise.sample(StandardNormal);
                features.push((m + cluster_spread * z) as f32);
            }
            labels.push(c as u32);
        }
    }
    Dataset::new(features, labels, feature_dim, num_classes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_spread_lands_on_centres() {
        let d = make_synthetic_dataset(2, 1, 2, 0.0, 9).unwrap();
        let mut rng0 = rng::stream(&[tag::DATA, 9, 0, 0]);
        let c0: Vec<f32> = (0..2).map(|_| rng0.random_range(-2.0..2.0) as f32).collect();
        assert_eq!(d.len(), 2);
        assert_eq!(d.sample(0).0, c0.as_slice());
        assert_eq!(d.labels(), &[0, 1]);
    }

    #[test]
    fn deterministic_bytes() {
        let a = make_synthetic_dataset(3, 100, 4, 0.1, 42).unwrap();
        let b = make_synthetic_dataset(3, 100, 4, 0.1, 42).unwrap();
        assert_eq!(a.len(), 300);
        assert_eq!(a.to_le_bytes(), b.to_le_bytes());
        let c = make_synthetic_dataset(3, 100, 4, 0.1, 43).unwrap();
        assert_ne!(a.to_le_bytes(), c.to_le_bytes());
    }

    #[test]
    fn rejects_zero_dim() {
        assert!(make_synthetic_dataset(2, 5, 0, 0.1, 1).is_err());
        assert!(make_synthetic_dataset(2, 5, 3, -0.1, 1).is_err());
    }

    #[test]
    fn invariants_enforced() {
        assert!(Dataset::new(vec![0.0; 4], vec![0, 2], 2, 2).is_err());
        assert!(Dataset::new(vec![0.0; 3], vec![0, 1], 2, 2).is_err());
    }
}
