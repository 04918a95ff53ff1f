use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::SimError;
use crate::ledger::{Address, Gwei};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stratum {
    Reliable,
    Unreliable,
}

/// Ranges a stratum's profiles are drawn from (uniform within each range).
#[derive(Clone, Debug, PartialEq)]
pub struct StratumMix {
    /// KB per second.
    pub compute_rate: (f64, f64),
    /// KB per second.
    pub bandwidth: (f64, f64),
    pub data_size_kb: (f64, f64),
    pub dropout_prob: (f64, f64),
    /// Share of the training set relative to other clients.
    pub data_weight: f64,
}

impl StratumMix {
    pub fn reliable() -> Self {
        Self {
            compute_rate: (320.0, 450.0),
            bandwidth: (2000.0, 4000.0),
            data_size_kb: (3000.0, 4000.0),
            dropout_prob: (0.0, 0.02),
            data_weight: 1.0,
        }
    }

    pub fn unreliable() -> Self {
        Self {
            compute_rate: (108.0, 180.0),
            bandwidth: (100.0, 400.0),
            data_size_kb: (3000.0, 4000.0),
            dropout_prob: (0.05, 0.3),
            data_weight: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PopulationSpec {
    pub unreliable_fraction: f64,
    pub reliable: StratumMix,
    pub unreliable: StratumMix,
    pub data_type: String,
    /// Price a client asks before its margin.
    pub base_price: Gwei,
    /// Upper bound of the uniformly drawn margin.
    pub max_margin: f64,
}

impl Default for PopulationSpec {
    fn default() -> Self {
        Self {
            unreliable_fraction: 0.3,
            reliable: StratumMix::reliable(),
            unreliable: StratumMix::unreliable(),
            data_type: "mnist".into(),
            base_price: 1_000_000,
            max_margin: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClientProfile {
    pub address: Address,
    pub stratum: Stratum,
    pub compute_rate: f64,
    pub bandwidth: f64,
    pub data_size_kb: f64,
    pub data_type: String,
    pub dropout_prob: f64,
    pub bid_price: Gwei,
    pub bid_margin: f64,
    /// Training samples held.
    pub samples: u64,
}

/// Virtual seconds to process local data and ship the model back.
pub fn completion_time(p: &ClientProfile, model_bytes: u64, overhead_s: f64) -> f64 {
    p.data_size_kb / p.compute_rate + (model_bytes as f64 / 1024.0) / p.bandwidth + overhead_s
}

/// Draws `addresses.len()` profiles; `round(n * unreliable_fraction)` of them,
/// at random positions, come from the unreliable mix. Shard sizes split
/// `train_rows` in proportion to each stratum's data weight.
pub fn generate_profiles(
    addresses: &[Address],
    spec: &PopulationSpec,
    train_rows: usize,
    seed: u64,
) -> Result<Vec<ClientProfile>, SimError> {
    let n = addresses.len();
    if n == 0 {
        return Err(SimError::Plan("need at least one client".into()));
    }
    if !(0.0..=1.0).contains(&spec.unreliable_fraction) {
        return Err(SimError::Plan("unreliable_fraction must be in [0, 1]".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_bad = (n as f64 * spec.unreliable_fraction).round() as usize;
    let mut strata: Vec<Stratum> = (0..n)
        .map(|i| {
            if i < n_bad {
                Stratum::Unreliable
            } else {
                Stratum::Reliable
            }
        })
        .collect();
    strata.shuffle(&mut rng);

    let weight = |s: Stratum| match s {
        Stratum::Reliable => spec.reliable.data_weight,
        Stratum::Unreliable => spec.unreliable.data_weight,
    };
    let total_weight: f64 = strata.iter().map(|&s| weight(s)).sum();
    let draw = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| if hi > lo { rng.gen_range(lo..hi) } else { lo };
    let mut out = Vec::with_capacity(n);
    for (&address, &stratum) in addresses.iter().zip(&strata) {
        let mix = match stratum {
            Stratum::Reliable => &spec.reliable,
            Stratum::Unreliable => &spec.unreliable,
        };
        let samples = (train_rows as f64 * weight(stratum) / total_weight).floor() as u64;
        if samples == 0 {
            return Err(SimError::Plan(format!(
                "{train_rows} training rows leave a client without data"
            )));
        }
        let bid_margin = draw(&mut rng, (0.0, spec.max_margin));
        out.push(ClientProfile {
            address,
            stratum,
            compute_rate: draw(&mut rng, mix.compute_rate),
            bandwidth: draw(&mut rng, mix.bandwidth),
            data_size_kb: draw(&mut rng, mix.data_size_kb),
            data_type: spec.data_type.clone(),
            dropout_prob: draw(&mut rng, mix.dropout_prob).clamp(0.0, 1.0),
            bid_price: (spec.base_price as f64 * (1.0 + bid_margin)).round() as Gwei,
            bid_margin,
            samples,
        });
    }
    Ok(out)
}
