use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::model::check_dims;
use super::{DatasetShard, FlError, ModelWeights};
use crate::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub momentum: f64,
    pub local_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            batch_size: 10,
            momentum: 0.9,
            local_epochs: 1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), FlError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(FlError::Config("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(FlError::Config("batch_size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(FlError::Config("momentum must be in [0, 1)".into()));
        }
        Ok(())
    }
}

/// A client's model change and its sample count.
#[derive(Clone, Debug, PartialEq)]
pub struct ClientUpdate<T> {
    pub delta: Vec<T>,
    pub n_samples: u64,
}

impl<T: Scalar> ClientUpdate<T> {
    pub fn new(delta: Vec<T>, n_samples: u64) -> Result<Self, FlError> {
        if n_samples == 0 {
            return Err(FlError::Config("n_samples must be at least 1".into()));
        }
        if delta.iter().any(|v| !v.is_finite()) {
            return Err(FlError::NonFinite);
        }
        Ok(Self { delta, n_samples })
    }
}

/// Result of [`local_train_traced`].
#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport<T> {
    pub update: ClientUpdate<T>,
    /// Full-shard loss after each epoch.
    pub epoch_losses: Vec<T>,
}

/// Mini-batch SGD with momentum on cross-entropy; returns `w_after - w`.
pub fn local_train<T: Scalar>(
    w: &ModelWeights<T>,
    shard: &DatasetShard<T>,
    cfg: &TrainConfig,
) -> Result<ClientUpdate<T>, FlError> {
    run(w, shard, cfg, false).map(|r| r.update)
}

/// [`local_train`] that also records the loss after every epoch.
pub fn local_train_traced<T: Scalar>(
    w: &ModelWeights<T>,
    shard: &DatasetShard<T>,
    cfg: &TrainConfig,
) -> Result<TrainReport<T>, FlError> {
    run(w, shard, cfg, true)
}

fn run<T: Scalar>(
    w: &ModelWeights<T>,
    shard: &DatasetShard<T>,
    cfg: &TrainConfig,
    trace: bool,
) -> Result<TrainReport<T>, FlError> {
    cfg.validate()?;
    check_dims(w, shard)?;
    if shard.is_empty() {
        return Err(FlError::Shape("empty training shard".into()));
    }
    let lr = T::of_f64(cfg.learning_rate);
    let mu = T::of_f64(cfg.momentum);
    let mut model = w.clone();
    let mut velocity = vec![T::zero(); w.param_count()];
    let mut grad = vec![T::zero(); w.param_count()];
    let mut order: Vec<usize> = (0..shard.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut epoch_losses = Vec::new();
    for _ in 0..cfg.local_epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let loss = model.loss_and_grad(shard, batch, Some(&mut grad));
            if !loss.is_finite() {
                return Err(FlError::Diverged);
            }
            for ((p, v), &g) in model.values.iter_mut().zip(&mut velocity).zip(&grad) {
                *v = mu * *v + g;
                *p = *p - lr * *v;
            }
        }
        if model.values.iter().any(|v| !v.is_finite()) {
            return Err(FlError::Diverged);
        }
        if trace {
            let all: Vec<usize> = (0..shard.len()).collect();
            epoch_losses.push(model.loss_and_grad(shard, &all, None));
        }
    }
    let delta = model.values.iter().zip(&w.values).map(|(&a, &b)| a - b).collect();
    Ok(TrainReport {
        update: ClientUpdate {
            delta,
            n_samples: shard.len() as u64,
        },
        epoch_losses,
    })
}

/// Largest relative disagreement between the analytic gradient and central
/// finite differences (step 1e-5) over `samples` random coordinates.
///
/// Runs in `f64` whatever `T` is. Relative error is
/// `|a - f| / max(|a|, |f|, 1e-7)`, so vanishing gradients compare absolutely.
pub fn gradient_check<T: Scalar>(
    w: &ModelWeights<T>,
    shard: &DatasetShard<T>,
    samples: usize,
    seed: u64,
) -> Result<f64, FlError> {
    use rand::Rng;
    check_dims(w, shard)?;
    let w = w.cast::<f64>();
    let shard = shard.cast::<f64>();
    let rows: Vec<usize> = (0..shard.len()).collect();
    let mut grad = vec![0.0; w.param_count()];
    w.loss_and_grad(&shard, &rows, Some(&mut grad));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-5;
    let mut probe = w.clone();
    let mut worst: f64 = 0.0;
    for _ in 0..samples.min(w.param_count()) {
        let i = rng.gen_range(0..w.param_count());
        let orig = probe.values[i];
        probe.values[i] = orig + h;
        let up = probe.loss_and_grad(&shard, &rows, None);
        probe.values[i] = orig - h;
        let down = probe.loss_and_grad(&shard, &rows, None);
        probe.values[i] = orig;
        let fd = (up - down) / (2.0 * h);
        let rel = (grad[i] - fd).abs() / grad[i].abs().max(fd.abs()).max(1e-7);
        worst = worst.max(rel);
    }
    Ok(worst)
}
