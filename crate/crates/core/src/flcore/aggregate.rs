use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{ClientUpdate, FlError, ModelWeights, Shape};
use crate::ckks::{Ciphertext, CkksContext, PublicKey, SecretKey};
use crate::Scalar;

/// Server-side learning rate applied to the averaged update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GlobalStep {
    pub eta_global: f64,
}

impl Default for GlobalStep {
    fn default() -> Self {
        Self { eta_global: 1.0 }
    }
}

impl GlobalStep {
    pub fn new(eta_global: f64) -> Result<Self, FlError> {
        if !(eta_global > 0.0 && eta_global.is_finite()) {
            return Err(FlError::Config("eta_global must be positive".into()));
        }
        Ok(Self { eta_global })
    }
}

/// `w + eta * sum(n_i * dw_i) / sum(n_i)`.
pub fn fedavg<T: Scalar>(
    w_t: &ModelWeights<T>,
    updates: &[ClientUpdate<T>],
    step: GlobalStep,
) -> Result<ModelWeights<T>, FlError> {
    if updates.is_empty() {
        return Err(FlError::NoUpdates);
    }
    if let Some(u) = updates.iter().find(|u| u.delta.len() != w_t.param_count()) {
        return Err(FlError::Shape(format!(
            "update has {} values, model has {}",
            u.delta.len(),
            w_t.param_count()
        )));
    }
    let total: f64 = updates.iter().map(|u| u.n_samples as f64).sum();
    let coeffs: Vec<T> = updates
        .iter()
        .map(|u| T::of_f64(step.eta_global * u.n_samples as f64 / total))
        .collect();
    let values = w_t
        .values
        .iter()
        .enumerate()
        .map(|(j, &w)| {
            let s = updates
                .iter()
                .zip(&coeffs)
                .fold(T::zero(), |acc, (u, &c)| acc + c * u.delta[j]);
            w + s
        })
        .collect();
    Ok(ModelWeights {
        values,
        shape: w_t.shape.clone(),
    })
}

/// A client update packed into ciphertexts; `n_samples` travels in clear.
#[derive(Clone, Debug, PartialEq)]
pub struct EncryptedUpdate {
    pub chunks: Vec<Ciphertext>,
    pub n_samples: u64,
    pub param_count: usize,
}

pub fn chunk_count(ctx: &CkksContext, param_count: usize) -> usize {
    param_count.div_ceil(ctx.slots()).max(1)
}

/// Encrypts `u.delta` at the top level, `slots` values per ciphertext.
pub fn encrypt_update<T: Scalar>(
    ctx: &CkksContext,
    u: &ClientUpdate<T>,
    pk: &PublicKey,
    seed: u64,
) -> Result<EncryptedUpdate, FlError> {
    let values: Vec<f64> = u.delta.iter().map(|v| v.as_f64()).collect();
    let chunks = encrypt_vector(ctx, &values, pk, seed)?;
    Ok(EncryptedUpdate {
        chunks,
        n_samples: u.n_samples,
        param_count: values.len(),
    })
}

/// Packs and encrypts an arbitrary vector (zero-padded tail).
pub fn encrypt_vector(
    ctx: &CkksContext,
    values: &[f64],
    pk: &PublicKey,
    seed: u64,
) -> Result<Vec<Ciphertext>, FlError> {
    let slots = ctx.slots();
    let n = chunk_count(ctx, values.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seeds: Vec<u64> = (0..n).map(|_| rng.gen()).collect();
    let level = ctx.top_level();
    seeds
        .into_par_iter()
        .enumerate()
        .map(|(j, s)| {
            let seg = &values[(j * slots).min(values.len())..((j + 1) * slots).min(values.len())];
            let pt = ctx.encode(seg, level)?;
            Ok(ctx.encrypt(&pt, pk, s)?)
        })
        .collect()
}

/// Weighted averaging on ciphertexts. Per chunk: weight every client's chunk
/// by `eta * n_i / sum(n)`, sum, rescale once, then add the current global
/// segment as a plaintext. Never decrypts.
pub fn encrypted_fedavg<T: Scalar>(
    ctx: &CkksContext,
    w_t: &ModelWeights<T>,
    enc_updates: &[EncryptedUpdate],
    step: GlobalStep,
) -> Result<Vec<Ciphertext>, FlError> {
    let first = enc_updates.first().ok_or(FlError::NoUpdates)?;
    let chunks = first.chunks.len();
    let head = first.chunks.first().ok_or(FlError::NoUpdates)?;
    let (level, scale) = (head.level, head.scale);
    for u in enc_updates {
        if u.param_count != w_t.param_count() {
            return Err(FlError::Shape(format!(
                "encrypted update has {} values, model has {}",
                u.param_count,
                w_t.param_count()
            )));
        }
        if u.chunks.len() != chunks {
            return Err(FlError::Alignment("updates differ in chunk count".into()));
        }
        if u.chunks.iter().any(|c| c.level != level || c.scale != scale) {
            return Err(FlError::Alignment("updates differ in level or scale".into()));
        }
    }
    if chunks < chunk_count(ctx, w_t.param_count()) {
        return Err(FlError::Alignment("too few chunks for the model".into()));
    }
    let total: f64 = enc_updates.iter().map(|u| u.n_samples as f64).sum();
    let weights = enc_updates
        .iter()
        .map(|u| {
            let c = step.eta_global * u.n_samples as f64 / total;
            ctx.encode(&vec![c; ctx.slots()], level)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let w: Vec<f64> = w_t.values.iter().map(|v| v.as_f64()).collect();
    let slots = ctx.slots();
    (0..chunks)
        .into_par_iter()
        .map(|j| {
            let mut acc: Option<Ciphertext> = None;
            for (u, pw) in enc_updates.iter().zip(&weights) {
                let prod = ctx.mul_plain(&u.chunks[j], pw)?;
                acc = Some(match acc {
                    None => prod,
                    Some(a) => ctx.add(&a, &prod)?,
                });
            }
            let avg = ctx.rescale(&acc.expect("non-empty updates"))?;
            let seg = &w[(j * slots).min(w.len())..((j + 1) * slots).min(w.len())];
            let pt = ctx.encode_with_scale(seg, avg.level, avg.scale)?;
            Ok(ctx.add_plain(&avg, &pt)?)
        })
        .collect()
}

/// Decrypts and unpacks an aggregated model.
pub fn decrypt_model<T: Scalar>(
    ctx: &CkksContext,
    chunks: &[Ciphertext],
    sk: &SecretKey,
    param_count: usize,
    shape: &Shape,
) -> Result<ModelWeights<T>, FlError> {
    let values = decrypt_vector(ctx, chunks, sk, param_count)?;
    ModelWeights::new(values.into_iter().map(T::of_f64).collect(), shape.clone())
}

pub fn decrypt_vector(
    ctx: &CkksContext,
    chunks: &[Ciphertext],
    sk: &SecretKey,
    len: usize,
) -> Result<Vec<f64>, FlError> {
    let slots = ctx.slots();
    if chunks.len() * slots < len {
        return Err(FlError::Alignment(format!(
            "{} chunks hold at most {} values, need {len}",
            chunks.len(),
            chunks.len() * slots
        )));
    }
    let parts = chunks
        .par_iter()
        .enumerate()
        .map(|(j, ct)| {
            let take = len.saturating_sub(j * slots).min(slots);
            ctx.decode(&ctx.decrypt(ct, sk), take)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(parts.concat())
}
