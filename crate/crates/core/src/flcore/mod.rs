//! Federated learning: small dense models, local SGD, FedAvg and its CKKS
//! counterpart.
//!
//! Everything is generic over [`Scalar`](crate::Scalar). The encrypted path
//! converts to `f64` at the CKKS boundary.

mod aggregate;
pub mod checkpoint;
mod data;
mod model;
mod train;

pub use aggregate::{
    chunk_count, decrypt_model, decrypt_vector, encrypt_update, encrypt_vector, encrypted_fedavg, fedavg,
    EncryptedUpdate, GlobalStep,
};
pub use data::{gaussian_blobs, DatasetShard};
pub use model::{argmax, evaluate, init_model, ModelWeights, Shape};
pub use train::{gradient_check, local_train, local_train_traced, ClientUpdate, TrainConfig, TrainReport};

use thiserror::Error;

use crate::ckks::CkksError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite value")]
    NonFinite,
    #[error("training diverged")]
    Diverged,
    #[error("no client updates to aggregate")]
    NoUpdates,
    #[error("encrypted updates not aligned: {0}")]
    Alignment(String),
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Ckks(#[from] CkksError),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ckks::{CkksContext, CkksParams};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_vec(n: usize, scale: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
    }

    fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    /// Weighted mean written out term by term.
    fn fedavg_oracle(w: &[f64], updates: &[(Vec<f64>, u64)], eta: f64) -> Vec<f64> {
        let total: u64 = updates.iter().map(|u| u.1).sum();
        (0..w.len())
            .map(|j| {
                let mut num = 0.0;
                for (d, n) in updates {
                    num += *n as f64 * d[j];
                }
                w[j] + eta * num / total as f64
            })
            .collect()
    }

    #[test]
    fn param_count_formula() {
        let s = Shape::new(784, vec![64], 10).unwrap();
        assert_eq!(s.param_count(), 784 * 64 + 64 + 64 * 10 + 10);
        assert_eq!(Shape::logistic(784, 10).unwrap().param_count(), 7850);
        assert_eq!(Shape::from_dims(&s.dims()).unwrap(), s);
        assert!(Shape::new(3, vec![0], 2).is_err());
        assert!(Shape::from_dims(&[3]).is_err());
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let s = Shape::new(16, vec![8], 3).unwrap();
        let a: ModelWeights<f64> = init_model(&s, 1);
        assert_eq!(a, init_model(&s, 1));
        assert_ne!(a, init_model(&s, 2));
        assert_eq!(a.param_count(), s.param_count());
        for (w_off, b_off, fan_in, fan_out) in s.layers() {
            let r = 1.0 / (fan_in as f64).sqrt();
            assert!(a.values[w_off..b_off].iter().all(|v| v.abs() <= r));
            assert!(a.values[b_off..b_off + fan_out].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn untrained_model_is_near_chance() {
        let data: DatasetShard<f64> = gaussian_blobs(2000, 10, 2, 0.5, 3).unwrap();
        let mut accs = Vec::new();
        for seed in 0..10 {
            let w = init_model(&Shape::logistic(10, 2).unwrap(), seed);
            accs.push(evaluate(&w, &data).unwrap());
        }
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        assert!((mean - 0.5).abs() <= 0.1, "mean {mean}");
    }

    #[test]
    fn zero_epochs_is_a_no_op() {
        let data: DatasetShard<f64> = gaussian_blobs(50, 4, 3, 0.3, 1).unwrap();
        let w = init_model(&Shape::new(4, vec![5], 3).unwrap(), 1);
        let cfg = TrainConfig {
            local_epochs: 0,
            ..TrainConfig::default()
        };
        let u = local_train(&w, &data, &cfg).unwrap();
        assert!(u.delta.iter().all(|&d| d == 0.0));
        assert_eq!(u.n_samples, 50);
    }

    #[test]
    fn loss_decreases_on_separable_data() {
        let data: DatasetShard<f64> = gaussian_blobs(200, 5, 2, 0.2, 4).unwrap();
        let w = init_model(&Shape::logistic(5, 2).unwrap(), 4);
        let cfg = TrainConfig {
            local_epochs: 5,
            ..TrainConfig::default()
        };
        let r = local_train_traced(&w, &data, &cfg).unwrap();
        assert_eq!(r.epoch_losses.len(), 5);
        assert!(r.epoch_losses.windows(2).all(|p| p[1] < p[0]), "{:?}", r.epoch_losses);
    }

    #[test]
    fn training_converges_on_separable_data() {
        let data: DatasetShard<f64> = gaussian_blobs(400, 8, 4, 0.2, 5).unwrap();
        let mut w = init_model(&Shape::new(8, vec![16], 4).unwrap(), 5);
        let cfg = TrainConfig {
            local_epochs: 10,
            ..TrainConfig::default()
        };
        let u = local_train(&w, &data, &cfg).unwrap();
        w = fedavg(&w, &[u], GlobalStep::default()).unwrap();
        assert!(evaluate(&w, &data).unwrap() > 0.95);
    }

    #[test]
    fn training_is_deterministic_and_generic() {
        let data: DatasetShard<f64> = gaussian_blobs(60, 4, 3, 0.3, 7).unwrap();
        let w = init_model(&Shape::new(4, vec![6], 3).unwrap(), 7);
        let cfg = TrainConfig::default();
        assert_eq!(
            local_train(&w, &data, &cfg).unwrap(),
            local_train(&w, &data, &cfg).unwrap()
        );
        let u32_: ClientUpdate<f32> = local_train(&w.cast(), &data.cast(), &cfg).unwrap();
        let u64_ = local_train(&w, &data, &cfg).unwrap();
        let d32: Vec<f64> = u32_.delta.iter().map(|&v| v as f64).collect();
        assert!(max_abs_diff(&d32, &u64_.delta) < 1e-4);
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let data: DatasetShard<f64> = gaussian_blobs(10, 4, 2, 0.3, 1).unwrap();
        let w = init_model(&Shape::logistic(5, 2).unwrap(), 1);
        assert!(matches!(
            local_train(&w, &data, &TrainConfig::default()),
            Err(FlError::Shape(_))
        ));
        assert!(matches!(evaluate(&w, &data), Err(FlError::Shape(_))));
        let w = init_model(&Shape::logistic(4, 2).unwrap(), 1);
        let cfg = TrainConfig {
            momentum: 1.0,
            ..TrainConfig::default()
        };
        assert!(matches!(local_train(&w, &data, &cfg), Err(FlError::Config(_))));
        let wild = DatasetShard::new(vec![1e300; 40], 4, vec![0, 1, 0, 1, 0, 1, 0, 1, 0, 1], 2).unwrap();
        let cfg = TrainConfig {
            learning_rate: 1.0,
            local_epochs: 3,
            ..TrainConfig::default()
        };
        assert_eq!(local_train(&w, &wild, &cfg), Err(FlError::Diverged));
        assert!(DatasetShard::new(vec![0.0; 3], 2, vec![0], 2).is_err());
        assert!(DatasetShard::new(vec![0.0; 2], 2, vec![2], 2).is_err());
    }

    #[test]
    fn gradient_check_small_models() {
        for seed in 0..5 {
            let data: DatasetShard<f64> = gaussian_blobs(16, 6, 3, 0.5, seed).unwrap();
            let hidden = if seed % 2 == 0 { vec![] } else { vec![5, 4] };
            let w = init_model(&Shape::new(6, hidden, 3).unwrap(), seed);
            let e = gradient_check(&w, &data, 40, seed).unwrap();
            assert!(e < 1e-4, "seed {seed}: {e}");
            assert_eq!(e, gradient_check(&w, &data, 40, seed).unwrap());
        }
    }

    #[test]
    fn zero_features_give_zero_weight_gradients() {
        let data = DatasetShard::new(vec![0.0; 4 * 3], 3, vec![0, 1, 0, 1], 2).unwrap();
        let w = ModelWeights::<f64>::zeros(Shape::logistic(3, 2).unwrap());
        let mut g = vec![1.0; w.param_count()];
        w.loss_and_grad(&data, &[0, 1, 2, 3], Some(&mut g));
        assert!(g[..6].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn evaluate_edge_cases() {
        let data = DatasetShard::new(vec![1.0, -1.0, 1.0, -1.0], 1, vec![0, 0, 1, 1], 2).unwrap();
        let constant = ModelWeights::new(vec![0.0, 0.0, 1.0, 0.0], Shape::logistic(1, 2).unwrap()).unwrap();
        assert_eq!(evaluate(&constant, &data).unwrap(), 0.5);
        let mut w = init_model::<f64>(&Shape::logistic(1, 2).unwrap(), 3);
        let a = evaluate(&w, &data).unwrap();
        // Scaling every logit by a positive factor keeps the argmax.
        w.values.iter_mut().for_each(|v| *v *= 7.5);
        assert_eq!(evaluate(&w, &data).unwrap(), a);
        assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn fedavg_degenerate_cases() {
        let s = Shape::logistic(3, 2).unwrap();
        let w = init_model::<f64>(&s, 1);
        let d = rand_vec(8, 1.0, 2);
        let one = fedavg(&w, &[ClientUpdate::new(d.clone(), 7).unwrap()], GlobalStep::default()).unwrap();
        let expect: Vec<f64> = w.values.iter().zip(&d).map(|(a, b)| a + b).collect();
        assert!(max_abs_diff(&one.values, &expect) < 1e-15);
        let zero = fedavg(
            &w,
            &vec![ClientUpdate::new(vec![0.0; 8], 3).unwrap(); 4],
            GlobalStep::default(),
        )
        .unwrap();
        assert_eq!(zero, w);
        assert_eq!(fedavg::<f64>(&w, &[], GlobalStep::default()), Err(FlError::NoUpdates));
        assert!(matches!(
            fedavg(
                &w,
                &[ClientUpdate::new(vec![0.0; 3], 1).unwrap()],
                GlobalStep::default()
            ),
            Err(FlError::Shape(_))
        ));
        assert!(GlobalStep::new(0.0).is_err());
    }

    proptest! {
        #[test]
        fn fedavg_matches_oracle(
            clients in 1usize..32,
            params in 1usize..200,
            eta in 0.1f64..2.0,
            seed in any::<u64>(),
        ) {
            let s = Shape::new(params, vec![], 2).unwrap();
            let w = ModelWeights::new(rand_vec(s.param_count(), 1.0, seed), s.clone()).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
            let raw: Vec<(Vec<f64>, u64)> = (0..clients)
                .map(|i| (rand_vec(s.param_count(), 0.1, seed.wrapping_add(i as u64)), rng.gen_range(1..1000)))
                .collect();
            let updates: Vec<_> = raw.iter().map(|(d, n)| ClientUpdate::new(d.clone(), *n).unwrap()).collect();
            let got = fedavg(&w, &updates, GlobalStep::new(eta).unwrap()).unwrap();
            prop_assert!(max_abs_diff(&got.values, &fedavg_oracle(&w.values, &raw, eta)) < 1e-12);
        }

        #[test]
        fn splitting_a_client_changes_nothing(seed in any::<u64>(), n in 1u64..500) {
            let s = Shape::logistic(10, 3).unwrap();
            let w = init_model::<f64>(&s, seed);
            let a = ClientUpdate::new(rand_vec(s.param_count(), 0.1, seed), 2 * n).unwrap();
            let b = ClientUpdate::new(rand_vec(s.param_count(), 0.1, seed ^ 9), 3).unwrap();
            let half = ClientUpdate::new(a.delta.clone(), n).unwrap();
            let whole = fedavg(&w, &[a, b.clone()], GlobalStep::default()).unwrap();
            let split = fedavg(&w, &[half.clone(), half, b], GlobalStep::default()).unwrap();
            prop_assert!(max_abs_diff(&whole.values, &split.values) < 1e-12);
        }

        #[test]
        fn checkpoint_roundtrip(seed in any::<u64>(), hidden in prop::collection::vec(1usize..6, 0..3)) {
            let s = Shape::new(4, hidden, 3).unwrap();
            let w = init_model::<f64>(&s, seed);
            let bytes = checkpoint::to_bytes(&w);
            prop_assert_eq!(checkpoint::from_bytes::<f64>(&bytes).unwrap(), w);
        }
    }

    #[test]
    fn checkpoint_rejects_garbage() {
        let w = init_model::<f64>(&Shape::logistic(3, 2).unwrap(), 0);
        let bytes = checkpoint::to_bytes(&w);
        assert!(checkpoint::from_bytes::<f64>(&bytes[..bytes.len() - 1]).is_err());
        assert!(checkpoint::from_bytes::<f64>(b"NOPE").is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(checkpoint::from_bytes::<f64>(&extra).is_err());
        assert_eq!(&bytes[..4], b"FLWT");
    }

    fn small_ctx() -> CkksContext {
        CkksContext::new(CkksParams::standard(64).unwrap()).unwrap()
    }

    #[test]
    fn encrypted_roundtrip_and_chunking() {
        let ctx = small_ctx();
        let kp = ctx.keygen(1);
        for len in [0, 1, 31, 32, 33, 100] {
            let d = rand_vec(len, 0.5, len as u64);
            let e = encrypt_update(&ctx, &ClientUpdate::new(d.clone(), 1).unwrap(), &kp.public_key, 3).unwrap();
            assert_eq!(e.chunks.len(), len.div_ceil(32).max(1));
            let back = decrypt_vector(&ctx, &e.chunks, &kp.secret_key, len).unwrap();
            assert!(max_abs_diff(&back, &d) < 1e-5, "len {len}");
        }
        let e = encrypt_update(&ctx, &ClientUpdate::new(vec![0.0; 40], 1).unwrap(), &kp.public_key, 3).unwrap();
        let back = decrypt_vector(&ctx, &e.chunks, &kp.secret_key, 40).unwrap();
        assert!(back.iter().all(|v| v.abs() < 1e-5));
        assert!(decrypt_vector(&ctx, &e.chunks, &kp.secret_key, 65).is_err());
    }

    #[test]
    fn encrypted_fedavg_matches_plaintext() {
        let ctx = small_ctx();
        let kp = ctx.keygen(2);
        let s = Shape::new(5, vec![4], 3).unwrap();
        let w = init_model::<f64>(&s, 2);
        let updates: Vec<_> = (0..4)
            .map(|i| ClientUpdate::new(rand_vec(s.param_count(), 0.2, i), 10 + 17 * i).unwrap())
            .collect();
        let enc: Vec<_> = updates
            .iter()
            .enumerate()
            .map(|(i, u)| encrypt_update(&ctx, u, &kp.public_key, i as u64).unwrap())
            .collect();
        let step = GlobalStep::new(0.8).unwrap();
        let agg = encrypted_fedavg(&ctx, &w, &enc, step).unwrap();
        let dec: ModelWeights<f64> = decrypt_model(&ctx, &agg, &kp.secret_key, s.param_count(), &s).unwrap();
        let plain = fedavg(&w, &updates, step).unwrap();
        assert!(max_abs_diff(&dec.values, &plain.values) < 1e-4);

        let mut rev = enc.clone();
        rev.reverse();
        let agg2 = encrypted_fedavg(&ctx, &w, &rev, step).unwrap();
        let dec2: ModelWeights<f64> = decrypt_model(&ctx, &agg2, &kp.secret_key, s.param_count(), &s).unwrap();
        assert!(max_abs_diff(&dec.values, &dec2.values) < 1e-6);
    }

    #[test]
    fn encrypted_fedavg_rejects_misaligned() {
        let ctx = small_ctx();
        let kp = ctx.keygen(2);
        let s = Shape::logistic(3, 2).unwrap();
        let w = init_model::<f64>(&s, 2);
        let u = ClientUpdate::new(vec![0.1; 8], 1).unwrap();
        let a = encrypt_update(&ctx, &u, &kp.public_key, 1).unwrap();
        let mut b = a.clone();
        b.chunks[0] = ctx.rescale(&b.chunks[0]).unwrap();
        assert!(matches!(
            encrypted_fedavg(&ctx, &w, &[a.clone(), b], GlobalStep::default()),
            Err(FlError::Alignment(_))
        ));
        assert_eq!(
            encrypted_fedavg(&ctx, &w, &[], GlobalStep::default()),
            Err(FlError::NoUpdates)
        );
        let too_big = ClientUpdate::new(vec![1e30; 8], 1).unwrap();
        assert!(matches!(
            encrypt_update(&ctx, &too_big, &kp.public_key, 1),
            Err(FlError::Ckks(_))
        ));
    }
}
