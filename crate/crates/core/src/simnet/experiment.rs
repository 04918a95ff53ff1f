use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{
    completion_time, derive_seed, generate_profiles, partition_iid, random_selection, ClientProfile, ExperimentPlan,
    RoundTrace, SelectionMode, SimError, Summary, VirtualClock,
};
use crate::ckks::{CkksContext, KeyPair};
use crate::contracts::{BidOffer, ForwardBidding, ScoreWeights, SettlementRecord};
use crate::flcore::{
    checkpoint, chunk_count, decrypt_model, encrypt_update, encrypted_fedavg, evaluate, fedavg, init_model,
    local_train, ClientUpdate, DatasetShard, ModelWeights, Shape, TrainConfig,
};
use crate::ledger::{Address, GasTable, Gwei, Ledger};
use crate::Scalar;

/// Gas headroom minted for the publisher beyond its budget.
const PUBLISHER_GAS_FUND: Gwei = 10_000_000_000;
/// Gas headroom minted for each client beyond its deposit.
const CLIENT_GAS_FUND: Gwei = 1_000_000_000;

#[derive(Clone, Debug)]
pub struct ExperimentResult<T> {
    pub traces: Vec<RoundTrace>,
    pub summary: Summary,
    pub ledger: Ledger,
    pub contracts: Option<ForwardBidding>,
    pub profiles: Vec<ClientProfile>,
    pub final_model: ModelWeights<T>,
    pub settlement: Option<SettlementRecord>,
}

/// Registers everyone, opens the auction, lets clients that meet the
/// requirements bid (weakest offer first, so every bid improves on the
/// last) and selects the winners at closing time. Returns winner indices
/// into `profiles`, best first.
pub fn run_auction_phase(
    ledger: &mut Ledger,
    fb: &mut ForwardBidding,
    publisher: Address,
    plan: &ExperimentPlan,
    profiles: &[ClientProfile],
    clock: &mut VirtualClock,
) -> Result<Vec<usize>, SimError> {
    let mut req = plan.requirements.clone();
    req.top_x = plan.selection_count();
    ledger.mint(publisher, req.budget + PUBLISHER_GAS_FUND)?;
    fb.register_publisher(ledger, publisher)?;
    for p in profiles {
        ledger.mint(p.address, req.security_deposit + CLIENT_GAS_FUND)?;
        fb.register_client(ledger, p.address, req.security_deposit)?;
    }
    let start = clock.now_secs();
    req.closing_time += start;
    fb.open_auction(ledger, publisher, req.clone(), start)?;

    let mut offers: Vec<(f64, usize, BidOffer)> = profiles
        .iter()
        .enumerate()
        .filter_map(|(i, p)| {
            let offer = BidOffer {
                compute: p.compute_rate,
                bandwidth: p.bandwidth,
                data_size: p.samples,
                data_type: p.data_type.clone(),
                price: p.bid_price,
            };
            ForwardBidding::check_offer(&req, &offer).ok()?;
            Some((fb.weights().score(&offer, &req), i, offer))
        })
        .collect();
    offers.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then(profiles[a.1].address.cmp(&profiles[b.1].address))
    });
    let mut t = start;
    for (_, i, offer) in offers {
        t = (t + 1).min(req.closing_time - 1);
        // A tie with the current best cannot improve it; that client abstains.
        match fb.place_bid(ledger, profiles[i].address, offer, t) {
            Ok(_) | Err(crate::contracts::ContractError::NonImprovingScore { .. }) => {}
            Err(e) => return Err(e.into()),
        }
    }
    let bids = fb.auction().map_or(0, |a| a.bid_book.len());
    if bids > 0 && bids < req.top_x {
        return Err(SimError::TooFewBidders {
            eligible: bids,
            slots: req.top_x,
        });
    }
    clock.advance_to(req.closing_time as f64);
    let winners = fb.select_top_x(ledger, publisher, clock.now_secs())?;
    fb.begin_training(ledger, publisher)?;
    Ok(winners
        .iter()
        .map(|w| {
            profiles
                .iter()
                .position(|p| p.address == *w)
                .expect("winner is a client")
        })
        .collect())
}

struct Chain {
    fb: ForwardBidding,
    publisher: Address,
    winners: Vec<usize>,
    dropped: Vec<bool>,
}

pub fn run_experiment<T: Scalar>(
    plan: &ExperimentPlan,
    train: &DatasetShard<T>,
    test: &DatasetShard<T>,
) -> Result<ExperimentResult<T>, SimError> {
    plan.validate()?;
    let n = plan.n_clients;
    let k = plan.selection_count();
    if k > n {
        return Err(SimError::Plan(format!("cannot select {k} of {n} clients")));
    }
    let seed = plan.seed;
    let mut ledger = Ledger::new(GasTable::default());
    let publisher = ledger.create_account(0);
    let addresses: Vec<Address> = (0..n).map(|_| ledger.create_account(0)).collect();
    let profiles = generate_profiles(&addresses, &plan.population, train.len(), derive_seed(seed, "profiles"))?;
    let sizes: Vec<usize> = profiles.iter().map(|p| p.samples as usize).collect();
    let shards = partition_iid(train, &sizes, derive_seed(seed, "partition"))?;
    let shape = Shape::new(
        train.feature_dim(),
        plan.hidden_layers.clone(),
        train.class_count().max(2),
    )?;
    let mut model: ModelWeights<T> = init_model(&shape, derive_seed(seed, "init"));

    let crypto: Option<(CkksContext, KeyPair)> = if plan.encryption {
        let ctx = CkksContext::new(plan.ckks.clone())?;
        let kp = ctx.keygen(derive_seed(seed, "keygen"));
        Some((ctx, kp))
    } else {
        None
    };
    let model_bytes = match &crypto {
        None => shape.param_count() as u64 * 8,
        Some((ctx, _)) => {
            let moduli = ctx.top_level() as u64 + 1;
            chunk_count(ctx, shape.param_count()) as u64 * 2 * moduli * ctx.params().ring_dim() as u64 * 8
        }
    };

    let mut clock = VirtualClock::default();
    let price = plan.gas_prices.avg;
    let mut chain = match plan.selection_mode {
        SelectionMode::Optimized => {
            let mut fb = ForwardBidding::deploy(&mut ledger, price, ScoreWeights::default());
            let winners = run_auction_phase(&mut ledger, &mut fb, publisher, plan, &profiles, &mut clock)?;
            ledger.seal_block();
            Some(Chain {
                fb,
                publisher,
                dropped: vec![false; n],
                winners,
            })
        }
        SelectionMode::Random => None,
    };
    let setup_gas = ledger.fees_collected();

    let mut traces = Vec::with_capacity(plan.rounds);
    let mut accuracies = Vec::new();
    let mut last_digest = None;
    let mut total_wall = 0.0;
    for r in 1..=plan.rounds {
        let mut selected: Vec<usize> = match &chain {
            Some(c) => c.winners.iter().copied().filter(|&i| !c.dropped[i]).collect(),
            None => random_selection(n, k, derive_seed(seed, &format!("select/{r}")))?,
        };
        selected.sort_by_key(|&i| profiles[i].address);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("dropout/{r}")));
        let (dropouts, survivors): (Vec<usize>, Vec<usize>) = selected
            .iter()
            .copied()
            .partition(|&i| rng.gen::<f64>() < profiles[i].dropout_prob);
        if survivors.is_empty() {
            return Err(SimError::AllDroppedOut { round: r });
        }

        let started = Instant::now();
        let updates = survivors
            .par_iter()
            .map(|&i| {
                let cfg = TrainConfig {
                    seed: derive_seed(seed, &format!("train/{r}/{i}")),
                    ..plan.train_config.clone()
                };
                local_train(&model, &shards[i], &cfg)
            })
            .collect::<Result<Vec<ClientUpdate<T>>, _>>()?;
        let next = match &crypto {
            None => fedavg(&model, &updates, plan.global_step)?,
            Some((ctx, kp)) => {
                let enc = survivors
                    .iter()
                    .zip(&updates)
                    .map(|(&i, u)| encrypt_update(ctx, u, &kp.public_key, derive_seed(seed, &format!("enc/{r}/{i}"))))
                    .collect::<Result<Vec<_>, _>>()?;
                let agg = encrypted_fedavg(ctx, &model, &enc, plan.global_step)?;
                decrypt_model(ctx, &agg, &kp.secret_key, shape.param_count(), &shape)?
            }
        };
        let wall = started.elapsed().as_secs_f64();
        total_wall += wall;
        model = next;
        let accuracy = evaluate(&model, test)?;
        accuracies.push(accuracy);
        let stop = plan.early_stop && accuracies.len() >= 4 && {
            let m = accuracies.len();
            accuracies[m - 1] - accuracies[m - 4] < 0.001
        };
        let last = r == plan.rounds || stop;

        let gas_before = ledger.fees_collected();
        let digest = ledger.content_put(&checkpoint::to_bytes(&model));
        if let Some(c) = &mut chain {
            for &i in &dropouts {
                c.fb.mark_dropout(&mut ledger, c.publisher, profiles[i].address)?;
                c.dropped[i] = true;
            }
            c.fb.add_model_hash(&mut ledger, c.publisher, digest, last)?;
            ledger.seal_block();
        }
        last_digest = Some(digest);

        let completion_times: Vec<(Address, f64)> = survivors
            .iter()
            .map(|&i| {
                (
                    profiles[i].address,
                    completion_time(&profiles[i], model_bytes, plan.overhead_s),
                )
            })
            .collect();
        let duration = completion_times.iter().map(|c| c.1).fold(0.0, f64::max);
        clock.advance(duration);
        traces.push(RoundTrace {
            round_index: r,
            selected: selected.iter().map(|&i| profiles[i].address).collect(),
            dropouts: dropouts.iter().map(|&i| profiles[i].address).collect(),
            completion_times,
            wall_time_s: wall,
            virtual_time_s: clock.now(),
            accuracy,
            model_digest: digest,
            gas_spent: ledger.fees_collected() - gas_before,
        });
        if stop {
            break;
        }
    }

    let final_digest = match last_digest {
        Some(d) => d,
        None => ledger.content_put(&checkpoint::to_bytes(&model)),
    };
    let gas_before_settle = ledger.fees_collected();
    let mut settlement = None;
    let contracts = match chain {
        Some(mut c) => {
            if traces.is_empty() {
                c.fb.add_model_hash(&mut ledger, c.publisher, final_digest, true)?;
            }
            let rec = c.fb.settle(&mut ledger, c.publisher, clock.now_secs())?;
            for &i in &c.winners {
                if !c.dropped[i] {
                    c.fb.get_reward(&mut ledger, profiles[i].address)?;
                }
            }
            ledger.seal_block();
            settlement = Some(rec);
            Some(c.fb)
        }
        None => {
            ledger.seal_block();
            None
        }
    };
    let settlement_gas = ledger.fees_collected() - gas_before_settle;

    let summary = Summary {
        mode: plan.selection_mode,
        encrypted: plan.encryption,
        n_clients: n,
        selection_count: k,
        rounds_completed: traces.len(),
        final_accuracy: accuracies
            .last()
            .copied()
            .unwrap_or_else(|| evaluate(&model, test).unwrap_or(0.0)),
        total_wall_time_s: total_wall,
        total_virtual_time_s: clock.now(),
        total_gas_gwei: ledger.fees_collected(),
        setup_gas_gwei: setup_gas,
        settlement_gas_gwei: settlement_gas,
        dropouts: traces.iter().map(|t| t.dropouts.len()).sum(),
        fees_paid_gwei: settlement.as_ref().map_or(0, |s| s.total_fees()),
        deposits_refunded_gwei: settlement.as_ref().map_or(0, |s| s.total_refunded()),
        deposits_forfeited_gwei: settlement.as_ref().map_or(0, |s| s.total_forfeited()),
        settled: settlement.is_some(),
        final_model_digest: final_digest,
    };
    Ok(ExperimentResult {
        traces,
        summary,
        ledger,
        contracts,
        profiles,
        final_model: model,
        settlement,
    })
}
