use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::FlError;
use crate::Scalar;

/// Labelled samples stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetShard<T> {
    features: Vec<T>,
    feature_dim: usize,
    pub labels: Vec<usize>,
    class_count: usize,
}

impl<T: Scalar> DatasetShard<T> {
    pub fn new(features: Vec<T>, feature_dim: usize, labels: Vec<usize>, class_count: usize) -> Result<Self, FlError> {
        if feature_dim == 0 {
            return Err(FlError::Shape("feature dimension must be positive".into()));
        }
        if features.len() != feature_dim * labels.len() {
            return Err(FlError::Shape(format!(
                "{} feature values for {} rows of width {feature_dim}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(FlError::Shape(format!("label {bad} outside {class_count} classes")));
        }
        Ok(Self {
            features,
            feature_dim,
            labels,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn features(&self) -> &[T] {
        &self.features
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.features[i * self.feature_dim..(i + 1) * self.feature_dim]
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        let mut features = Vec::with_capacity(rows.len() * self.feature_dim);
        for &r in rows {
            features.extend_from_slice(self.row(r));
        }
        Self {
            features,
            feature_dim: self.feature_dim,
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            class_count: self.class_count,
        }
    }

    /// Shuffles rows and deals them into `sizes.len()` disjoint shards.
    pub fn split_iid(&self, sizes: &[usize], seed: u64) -> Result<Vec<Self>, FlError> {
        let total: usize = sizes.iter().sum();
        if total > self.len() {
            return Err(FlError::Shape(format!(
                "requested {total} rows from a shard of {}",
                self.len()
            )));
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut start = 0;
        Ok(sizes
            .iter()
            .map(|&s| {
                let shard = self.subset(&order[start..start + s]);
                start += s;
                shard
            })
            .collect())
    }

    pub fn cast<U: Scalar>(&self) -> DatasetShard<U> {
        DatasetShard {
            features: self.features.iter().map(|v| U::of_f64(v.as_f64())).collect(),
            feature_dim: self.feature_dim,
            labels: self.labels.clone(),
            class_count: self.class_count,
        }
    }
}

/// Balanced Gaussian blobs: class `c` is centred at a fixed random point
/// with coordinates in `[-1, 1]`, samples spread with standard deviation `spread`.
pub fn gaussian_blobs<T: Scalar>(
    rows: usize,
    dim: usize,
    classes: usize,
    spread: f64,
    seed: u64,
) -> Result<DatasetShard<T>, FlError> {
    use rand::Rng;
    if classes < 2 {
        return Err(FlError::Shape("need at least two classes".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centres: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let noise = Normal::new(0.0, spread).map_err(|e| FlError::Shape(e.to_string()))?;
    let mut features = Vec::with_capacity(rows * dim);
    let mut labels = Vec::with_capacity(rows);
    for r in 0..rows {
        let c = r % classes;
        labels.push(c);
        for &m in &centres[c] {
            features.push(T::of_f64(m + noise.sample(&mut rng)));
        }
    }
    DatasetShard::new(features, dim, labels, classes)
}
