use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Labelled feature vectors stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
    pub num_features: usize,
    pub num_classes: usize,
}

impl Dataset {
    pub fn new(features: Vec<f64>, labels: Vec<usize>, num_features: usize, num_classes: usize) -> Result<Self> {
        if num_features == 0 || features.len() != labels.len() * num_features {
            return Err(Error::Domain(format!(
                "{} feature values do not form {} rows of {num_features}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::Domain(format!("label {bad} outside 0..{num_classes}")));
        }
        Ok(Self {
            features,
            labels,
            num_features,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.num_features..(i + 1) * self.num_features]
    }

    /// Largest eigenvalue of `(1/S) sum_i x_i x_i^T` with `x_i` augmented by a
    /// constant 1 for the bias, by power iteration on the real Gram matrix.
    pub fn gram_max_eigenvalue(&self) -> f64 {
        let b = self.num_features + 1;
        let s = self.len().max(1) as f64;
        let mut gram = vec![0.0; b * b];
        for i in 0..self.len() {
            let x = self.row(i);
            for r in 0..b {
                let xr = if r < b - 1 { x[r] } else { 1.0 };
                for c in 0..b {
                    let xc = if c < b - 1 { x[c] } else { 1.0 };
                    gram[r * b + c] += xr * xc / s;
                }
            }
        }
        let mut v = vec![1.0 / (b as f64).sqrt(); b];
        let mut lambda = 0.0;
        for _ in 0..10_000 {
            let mut next: Vec<f64> = (0..b).map(|r| (0..b).map(|c| gram[r * b + c] * v[c]).sum()).collect();
            let n = next.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n == 0.0 {
                return 0.0;
            }
            next.iter_mut().for_each(|x| *x /= n);
            let done = (n - lambda).abs() <= 1e-12 * n;
            lambda = n;
            v = next;
            if done {
                break;
            }
        }
        lambda
    }
}

/// Shuffle `0..samples` and cut it into `devices` shards of equal size.
pub fn even_partition<R: Rng + ?Sized>(samples: usize, devices: usize, rng: &mut R) -> Result<Vec<Vec<usize>>> {
    if devices == 0 || samples == 0 || !samples.is_multiple_of(devices) {
        return Err(Error::Config(format!(
            "{samples} samples cannot be split evenly over {devices} devices"
        )));
    }
    let mut order: Vec<usize> = (0..samples).collect();
    order.shuffle(rng);
    Ok(order.chunks(samples / devices).map(<[usize]>::to_vec).collect())
}

/// Unit-variance Gaussian class clusters whose centres have norm `margin` and
/// random directions; `margin = 0` makes the classes indistinguishable.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTask {
    pub means: Vec<Vec<f64>>,
    pub num_features: usize,
}

impl SyntheticTask {
    pub fn new<R: Rng + ?Sized>(classes: usize, features: usize, margin: f64, rng: &mut R) -> Result<Self> {
        if classes < 2 || features == 0 || !(margin >= 0.0) {
            return Err(Error::Config(format!(
                "synthetic task needs C >= 2, b >= 1, margin >= 0 (got {classes}, {features}, {margin})"
            )));
        }
        let means = (0..classes)
            .map(|_| {
                let mut v: Vec<f64> = (0..features).map(|_| StandardNormal.sample(rng)).collect();
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
                v.iter_mut().for_each(|x| *x *= margin / n);
                v
            })
            .collect();
        Ok(Self {
            means,
            num_features: features,
        })
    }

    /// `samples` points with balanced labels in random order.
    pub fn sample<R: Rng + ?Sized>(&self, samples: usize, rng: &mut R) -> Result<Dataset> {
        let classes = self.means.len();
        if samples < classes {
            return Err(Error::Config(format!("need at least {classes} samples, got {samples}")));
        }
        let mut labels: Vec<usize> = (0..samples).map(|i| i % classes).collect();
        labels.shuffle(rng);
        let mut features = Vec::with_capacity(samples * self.num_features);
        for &y in &labels {
            for &mu in &self.means[y] {
                let z: f64 = StandardNormal.sample(rng);
                features.push(mu + z);
            }
        }
        Dataset::new(features, labels, self.num_features, classes)
    }
}

/// A fresh task and `samples` points from it.
pub fn make_synthetic<R: Rng + ?Sized>(
    classes: usize,
    features: usize,
    samples: usize,
    margin: f64,
    rng: &mut R,
) -> Result<Dataset> {
    SyntheticTask::new(classes, features, margin, rng)?.sample(samples, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Stream};

    #[test]
    fn partition_is_even_and_disjoint() {
        let shards = even_partition(60, 12, &mut substream(1, Stream::Data, &[])).unwrap();
        assert!(shards.iter().all(|s| s.len() == 5));
        let mut all = shards.concat();
        all.sort_unstable();
        assert_eq!(all, (0..60).collect::<Vec<_>>());
        assert!(even_partition(61, 12, &mut substream(1, Stream::Data, &[])).is_err());
    }

    #[test]
    fn synthetic_is_seeded_and_balanced() {
        let a = make_synthetic(4, 3, 100, 2.0, &mut substream(9, Stream::Data, &[])).unwrap();
        let b = make_synthetic(4, 3, 100, 2.0, &mut substream(9, Stream::Data, &[])).unwrap();
        assert_eq!(a, b);
        for c in 0..4 {
            assert_eq!(a.labels.iter().filter(|&&y| y == c).count(), 25);
        }
        assert!(make_synthetic(1, 3, 100, 2.0, &mut substream(9, Stream::Data, &[])).is_err());
    }

    #[test]
    fn dataset_validates_shapes() {
        assert!(Dataset::new(vec![0.0; 5], vec![0, 1], 2, 2).is_err());
        assert!(Dataset::new(vec![0.0; 4], vec![0, 2], 2, 2).is_err());
    }

    #[test]
    fn gram_eigenvalue_of_constant_rows() {
        // rows (1, 1) augmented to (1, 1, 1): Gram = ones(3), top eigenvalue 3
        let d = Dataset::new(vec![1.0; 8], vec![0; 4], 2, 2).unwrap();
        assert!((d.gram_max_eigenvalue() - 3.0).abs() < 1e-9);
    }
}
