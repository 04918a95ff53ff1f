//! Round-by-round simulation of client selection, local training, dropouts,
//! (encrypted) aggregation and on-chain bookkeeping.
//!
//! Two clocks run side by side. Virtual time models heterogeneous clients
//! (compute, bandwidth, fixed overhead); wall time measures what the host
//! actually spent, CKKS included.
//!
//! All randomness comes from one master seed split per component with
//! [`derive_seed`].

mod experiment;
mod profile;

pub use experiment::{run_auction_phase, run_experiment, ExperimentResult};
pub use profile::{completion_time, generate_profiles, ClientProfile, PopulationSpec, Stratum, StratumMix};

use std::fmt::Write as _;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::ckks::{CkksError, CkksParams};
use crate::contracts::{ContractError, TaskRequirements};
use crate::flcore::{DatasetShard, FlError, GlobalStep, TrainConfig};
use crate::ledger::{Address, Digest, GasPrices, Gwei, LedgerError};
use crate::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid plan: {0}")]
    Plan(String),
    #[error("round {round}: every selected client dropped out")]
    AllDroppedOut { round: usize },
    #[error("{eligible} eligible bidders for {slots} slots")]
    TooFewBidders { eligible: usize, slots: usize },
    #[error(transparent)]
    Fl(#[from] FlError),
    #[error(transparent)]
    Contract(#[from] ContractError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Ckks(#[from] CkksError),
}

/// First eight bytes of `sha256(seed_le || label)` as a little-endian `u64`.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(label.as_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().unwrap())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SelectionMode {
    Optimized,
    Random,
}

impl SelectionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SelectionMode::Optimized => "optimized",
            SelectionMode::Random => "random",
        }
    }
}

impl std::str::FromStr for SelectionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "optimized" => Ok(Self::Optimized),
            "random" => Ok(Self::Random),
            other => Err(format!("unknown selection mode {other:?}")),
        }
    }
}

/// Everything an experiment needs apart from the data itself.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentPlan {
    pub n_clients: usize,
    pub rounds: usize,
    pub selection_mode: SelectionMode,
    /// Share of clients selected; `ceil(fraction * n_clients)` clients.
    pub selection_fraction: f64,
    pub encryption: bool,
    pub seed: u64,
    pub train_config: TrainConfig,
    pub global_step: GlobalStep,
    /// Auction requirements; `top_x` is replaced by the selection count.
    pub requirements: TaskRequirements,
    pub population: PopulationSpec,
    pub hidden_layers: Vec<usize>,
    pub ckks: CkksParams,
    pub gas_prices: GasPrices,
    /// Fixed per-round overhead added to every completion time.
    pub overhead_s: f64,
    /// Stop once accuracy gains stay below 0.001 for three rounds.
    pub early_stop: bool,
}

impl ExperimentPlan {
    pub fn new(ckks: CkksParams) -> Self {
        let train_config = TrainConfig::default();
        Self {
            n_clients: 30,
            rounds: 10,
            selection_mode: SelectionMode::Optimized,
            selection_fraction: 0.2,
            encryption: false,
            seed: 0,
            train_config,
            global_step: GlobalStep::default(),
            requirements: default_requirements(),
            population: PopulationSpec::default(),
            hidden_layers: Vec::new(),
            ckks,
            gas_prices: GasPrices::default(),
            overhead_s: 1.0,
            early_stop: false,
        }
    }

    pub fn selection_count(&self) -> usize {
        (self.selection_fraction * self.n_clients as f64 - 1e-9).ceil().max(1.0) as usize
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.n_clients == 0 {
            return Err(SimError::Plan("n_clients must be positive".into()));
        }
        if !(self.selection_fraction > 0.0 && self.selection_fraction <= 1.0) {
            return Err(SimError::Plan("selection_fraction must be in (0, 1]".into()));
        }
        if !(self.overhead_s >= 0.0 && self.overhead_s.is_finite()) {
            return Err(SimError::Plan("overhead_s must be non-negative".into()));
        }
        self.train_config.validate()?;
        let mut req = self.requirements.clone();
        req.top_x = self.selection_count();
        req.validate()?;
        Ok(())
    }
}

/// Thresholds that admit the reliable stratum and exclude the unreliable one.
pub fn default_requirements() -> TaskRequirements {
    TaskRequirements {
        min_compute: 300.0,
        min_bandwidth: 1000.0,
        data_type: "mnist".into(),
        min_data_size: 1,
        iterations: 10,
        budget: 100_000_000,
        security_deposit: 1_000_000,
        closing_time: 60,
        top_x: 1,
    }
}

/// Uniform sample of `count` distinct indices below `population`, ascending.
pub fn random_selection(population: usize, count: usize, seed: u64) -> Result<Vec<usize>, SimError> {
    if count > population {
        return Err(SimError::Plan(format!("cannot pick {count} of {population} clients")));
    }
    let mut picked = index::sample(&mut ChaCha8Rng::seed_from_u64(seed), population, count).into_vec();
    picked.sort_unstable();
    Ok(picked)
}

/// Disjoint IID shards of the given sizes.
pub fn partition_iid<T: Scalar>(
    dataset: &DatasetShard<T>,
    sizes: &[usize],
    seed: u64,
) -> Result<Vec<DatasetShard<T>>, SimError> {
    Ok(dataset.split_iid(sizes, seed)?)
}

/// Monotone virtual clock in seconds.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct VirtualClock {
    now: f64,
}

impl VirtualClock {
    pub fn now(&self) -> f64 {
        self.now
    }

    /// Whole seconds, rounded up, for contract timestamps.
    pub fn now_secs(&self) -> u64 {
        self.now.ceil() as u64
    }

    pub fn advance(&mut self, dt: f64) {
        assert!(dt >= 0.0 && dt.is_finite(), "clock cannot move by {dt}");
        self.now += dt;
    }

    pub fn advance_to(&mut self, t: f64) {
        if t > self.now {
            self.now = t;
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoundTrace {
    pub round_index: usize,
    pub selected: Vec<Address>,
    pub dropouts: Vec<Address>,
    /// Survivors' completion times, in address order.
    pub completion_times: Vec<(Address, f64)>,
    pub wall_time_s: f64,
    /// Clock reading at the end of the round.
    pub virtual_time_s: f64,
    pub accuracy: f64,
    pub model_digest: Digest,
    pub gas_spent: Gwei,
}

pub const TRACE_HEADER: &str =
    "round,mode,encrypted,selected,dropouts,accuracy,wall_time_s,virtual_time_s,gas_gwei,model_digest";

/// Trace as CSV; address lists are `;`-separated. Wall times are written
/// only when `with_wall_time`, otherwise as 0 so the file is reproducible.
pub fn trace_csv(traces: &[RoundTrace], mode: SelectionMode, encrypted: bool, with_wall_time: bool) -> String {
    let join = |v: &[Address]| v.iter().map(|a| a.to_hex()).collect::<Vec<_>>().join(";");
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for t in traces {
        writeln!(
            out,
            "{},{},{},{},{},{:.6},{:.6},{:.6},{},{}",
            t.round_index,
            mode.as_str(),
            encrypted,
            join(&t.selected),
            join(&t.dropouts),
            t.accuracy,
            if with_wall_time { t.wall_time_s } else { 0.0 },
            t.virtual_time_s,
            t.gas_spent,
            t.model_digest.to_hex()
        )
        .unwrap();
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub mode: SelectionMode,
    pub encrypted: bool,
    pub n_clients: usize,
    pub selection_count: usize,
    pub rounds_completed: usize,
    pub final_accuracy: f64,
    pub total_wall_time_s: f64,
    pub total_virtual_time_s: f64,
    pub total_gas_gwei: Gwei,
    pub setup_gas_gwei: Gwei,
    pub settlement_gas_gwei: Gwei,
    pub dropouts: usize,
    pub fees_paid_gwei: u128,
    pub deposits_refunded_gwei: u128,
    pub deposits_forfeited_gwei: u128,
    pub settled: bool,
    pub final_model_digest: Digest,
}

impl Summary {
    /// `key = value` lines; wall time is 0 unless `with_wall_time`.
    pub fn to_text(&self, with_wall_time: bool) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").unwrap();
        kv("mode", self.mode.as_str().into());
        kv("encrypted", self.encrypted.to_string());
        kv("n_clients", self.n_clients.to_string());
        kv("selection_count", self.selection_count.to_string());
        kv("rounds_completed", self.rounds_completed.to_string());
        kv("final_accuracy", format!("{:.6}", self.final_accuracy));
        kv(
            "total_wall_time_s",
            format!("{:.6}", if with_wall_time { self.total_wall_time_s } else { 0.0 }),
        );
        kv("total_virtual_time_s", format!("{:.6}", self.total_virtual_time_s));
        kv("total_gas_gwei", self.total_gas_gwei.to_string());
        kv("setup_gas_gwei", self.setup_gas_gwei.to_string());
        kv("settlement_gas_gwei", self.settlement_gas_gwei.to_string());
        kv("dropouts", self.dropouts.to_string());
        kv("fees_paid_gwei", self.fees_paid_gwei.to_string());
        kv("deposits_refunded_gwei", self.deposits_refunded_gwei.to_string());
        kv("deposits_forfeited_gwei", self.deposits_forfeited_gwei.to_string());
        kv("settled", self.settled.to_string());
        kv("final_model_digest", self.final_model_digest.to_hex());
        s
    }
}
