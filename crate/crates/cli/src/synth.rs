use fedchain::flcore::DatasetShard;
use fedchain::Scalar;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::CliError;

/// Gaussian class blobs: each class centre is a standard normal vector
/// scaled by `separation`, each sample its centre plus unit normal noise.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub train_samples: usize,
    pub test_samples: usize,
    pub feature_dim: usize,
    pub separation: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            classes: 10,
            train_samples: 2000,
            test_samples: 500,
            feature_dim: 20,
            separation: 1.0,
            seed: 0,
        }
    }
}

/// Train and test shards drawn around the same centres. Labels cycle
/// through the classes so both shards are balanced.
pub fn gen_synthetic<T: Scalar>(spec: &SyntheticSpec) -> Result<(DatasetShard<T>, DatasetShard<T>), CliError> {
    if spec.classes < 2 || spec.train_samples == 0 || spec.test_samples == 0 || spec.feature_dim == 0 {
        return Err(CliError::Invalid(
            "synthetic data needs at least 2 classes and positive sizes".into(),
        ));
    }
    if !(spec.separation >= 0.0 && spec.separation.is_finite()) {
        return Err(CliError::Invalid("synthetic separation must be non-negative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = spec.feature_dim;
    let centres: Vec<f64> = (0..spec.classes * d)
        .map(|_| spec.separation * Distribution::<f64>::sample(&StandardNormal, &mut rng))
        .collect();
    let mut draw = |rows: usize| {
        let labels: Vec<usize> = (0..rows).map(|i| i % spec.classes).collect();
        let mut features = Vec::with_capacity(rows * d);
        for &c in &labels {
            for mu in &centres[c * d..(c + 1) * d] {
                let noise: f64 = StandardNormal.sample(&mut rng);
                features.push(T::of_f64(mu + noise));
            }
        }
        DatasetShard::new(features, d, labels, spec.classes)
    };
    let train = draw(spec.train_samples)?;
    let test = draw(spec.test_samples)?;
    Ok((train, test))
}
