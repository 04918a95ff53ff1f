use super::*;
use crate::ledger::GasTable;
use proptest::prelude::*;

const PRICE: f64 = 23.49;
const DEPOSIT: Gwei = 1_000_000;
const RICH: Gwei = 1_000_000_000_000;

struct World {
    ledger: Ledger,
    fb: ForwardBidding,
    publisher: Address,
    clients: Vec<Address>,
}

fn requirements(top_x: usize) -> TaskRequirements {
    TaskRequirements {
        min_compute: 100.0,
        min_bandwidth: 50.0,
        data_type: "mnist".into(),
        min_data_size: 1000,
        iterations: 10,
        budget: 100_000_000,
        security_deposit: DEPOSIT,
        closing_time: 1000,
        top_x,
    }
}

fn offer(compute: f64, price: Gwei) -> BidOffer {
    BidOffer {
        compute,
        bandwidth: 50.0,
        data_size: 1000,
        data_type: "mnist".into(),
        price,
    }
}

fn world(n_clients: usize) -> World {
    let mut ledger = Ledger::new(GasTable::default());
    let fb = ForwardBidding::deploy(&mut ledger, PRICE, ScoreWeights::default());
    let publisher = ledger.create_account(RICH);
    let clients = (0..n_clients).map(|_| ledger.create_account(RICH)).collect();
    World {
        ledger,
        fb,
        publisher,
        clients,
    }
}

fn registered_open(n_clients: usize, top_x: usize) -> World {
    let mut w = world(n_clients);
    w.fb.register_publisher(&mut w.ledger, w.publisher).unwrap();
    for &c in &w.clients {
        w.fb.register_client(&mut w.ledger, c, DEPOSIT).unwrap();
    }
    w.fb.open_auction(&mut w.ledger, w.publisher, requirements(top_x), 0)
        .unwrap();
    w
}

fn trained(w: &mut World, bids: &[(usize, f64, Gwei)]) {
    for (i, &(c, compute, price)) in bids.iter().enumerate() {
        w.fb.place_bid(&mut w.ledger, w.clients[c], offer(compute, price), i as u64 + 1)
            .unwrap();
    }
    w.fb.select_top_x(&mut w.ledger, w.publisher, 1000).unwrap();
    w.fb.begin_training(&mut w.ledger, w.publisher).unwrap();
    let d = w.ledger.content_put(b"model");
    w.fb.add_model_hash(&mut w.ledger, w.publisher, d, true).unwrap();
}

/// Asserts that `f` fails and leaves ledger and contracts untouched.
fn assert_reverts<T: std::fmt::Debug>(
    w: &mut World,
    f: impl FnOnce(&mut World) -> Result<T, ContractError>,
) -> ContractError {
    let ledger = w.ledger.snapshot();
    let fb = w.fb.clone();
    let e = f(w).expect_err("call should revert");
    assert_eq!(w.ledger.snapshot(), ledger, "ledger changed by reverted call: {e}");
    assert_eq!(w.fb, fb, "contracts changed by reverted call: {e}");
    e
}

#[test]
fn registration_locks_deposit() {
    let mut w = world(1);
    let c = w.clients[0];
    w.fb.register_client(&mut w.ledger, c, DEPOSIT).unwrap();
    assert_eq!(w.ledger.escrow(c), DEPOSIT);
    assert_eq!(w.fb.client(c).unwrap().status, ClientStatus::Registered);
    assert_eq!(
        w.ledger.balance(c),
        RICH - DEPOSIT - w.ledger.quote("client_registration", PRICE).unwrap()
    );
    let e = assert_reverts(&mut w, |w| w.fb.register_client(&mut w.ledger, c, DEPOSIT));
    assert_eq!(e, ContractError::AlreadyRegistered(c));
}

#[test]
fn broke_accounts_revert() {
    let mut w = world(0);
    let poor = w.ledger.create_account(10);
    assert_reverts(&mut w, |w| w.fb.register_publisher(&mut w.ledger, poor));
    let fee = w.ledger.quote("client_registration", PRICE).unwrap();
    let almost = w.ledger.create_account(fee + DEPOSIT - 1);
    assert_reverts(&mut w, |w| w.fb.register_client(&mut w.ledger, almost, DEPOSIT));
    // Enough for one of the two auction-opening fees but not both.
    let p = w.ledger.create_account(0);
    w.ledger
        .mint(p, w.ledger.quote("task_publisher_registration", PRICE).unwrap())
        .unwrap();
    w.fb.register_publisher(&mut w.ledger, p).unwrap();
    w.ledger
        .mint(
            p,
            requirements(1).budget + w.ledger.quote("start_auction", PRICE).unwrap(),
        )
        .unwrap();
    assert_reverts(&mut w, |w| w.fb.open_auction(&mut w.ledger, p, requirements(1), 0));
}

#[test]
fn bid_validation() {
    let mut w = registered_open(3, 2);
    let c = w.clients[0];
    let mut low = offer(99.0, 1);
    assert!(matches!(
        assert_reverts(&mut w, |w| w.fb.place_bid(&mut w.ledger, c, low.clone(), 1)),
        ContractError::UnderResourced(_)
    ));
    low.compute = 100.0;
    low.data_type = "cifar".into();
    assert_reverts(&mut w, |w| w.fb.place_bid(&mut w.ledger, c, low.clone(), 1));
    let greedy = offer(100.0, requirements(2).budget + 1);
    assert!(matches!(
        assert_reverts(&mut w, |w| w.fb.place_bid(&mut w.ledger, c, greedy.clone(), 1)),
        ContractError::OverBudget { .. }
    ));
    assert!(matches!(
        assert_reverts(&mut w, |w| w.fb.place_bid(&mut w.ledger, c, offer(100.0, 1), 1000)),
        ContractError::BiddingClosed { .. }
    ));
    let stranger = w.ledger.create_account(RICH);
    assert_reverts(&mut w, |w| w.fb.place_bid(&mut w.ledger, stranger, offer(100.0, 1), 1));

    w.fb.place_bid(&mut w.ledger, c, offer(150.0, 10), 1).unwrap();
    let c1 = w.clients[1];
    // Equal score is not an improvement.
    assert!(matches!(
        assert_reverts(&mut w, |w| w.fb.place_bid(&mut w.ledger, c1, offer(150.0, 10), 2)),
        ContractError::NonImprovingScore { .. }
    ));
    w.fb.place_bid(&mut w.ledger, c1, offer(151.0, 10), 2).unwrap();
    assert_eq!(w.fb.auction().unwrap().bid_book.len(), 2);
    let broadcasts =
        w.fb.events()
            .iter()
            .filter(|e| matches!(e, ContractEvent::BidBroadcast { .. }))
            .count();
    assert_eq!(broadcasts, 2);
}

#[test]
fn deposit_must_match_rate() {
    let mut w = world(1);
    let c = w.clients[0];
    w.fb.register_publisher(&mut w.ledger, w.publisher).unwrap();
    w.fb.register_client(&mut w.ledger, c, DEPOSIT - 1).unwrap();
    w.fb.open_auction(&mut w.ledger, w.publisher, requirements(1), 0)
        .unwrap();
    assert!(matches!(
        assert_reverts(&mut w, |w| w.fb.place_bid(&mut w.ledger, c, offer(100.0, 1), 1)),
        ContractError::DepositMismatch { .. }
    ));
}

#[test]
fn scores_follow_weights() {
    let req = requirements(1);
    let o = BidOffer {
        compute: 200.0,
        bandwidth: 100.0,
        data_size: 3000,
        data_type: "mnist".into(),
        price: 50_000_000,
    };
    let expect = 0.4 * 2.0 + 0.2 * 2.0 + 0.3 * 3.0 - 0.1 * 0.5;
    assert!((ScoreWeights::default().score(&o, &req) - expect).abs() < 1e-12);
}

#[test]
fn selection_releases_losers_and_funds_pool() {
    let mut w = registered_open(4, 2);
    let bids = [
        (0, 110.0, 1_000),
        (1, 120.0, 2_000),
        (2, 130.0, 3_000),
        (3, 140.0, 4_000),
    ];
    for (i, &(c, compute, price)) in bids.iter().enumerate() {
        w.fb.place_bid(&mut w.ledger, w.clients[c], offer(compute, price), i as u64 + 1)
            .unwrap();
    }
    let outsider = w.clients[0];
    assert!(matches!(
        assert_reverts(&mut w, |w| w.fb.select_top_x(&mut w.ledger, outsider, 999)),
        ContractError::TooEarly { .. }
    ));
    let winners = w.fb.select_top_x(&mut w.ledger, outsider, 1000).unwrap();
    assert_eq!(winners, vec![w.clients[3], w.clients[2]]);
    assert_eq!(w.ledger.escrow(w.fb.contract_address()), 7_000);
    assert_eq!(w.ledger.escrow(w.publisher), requirements(2).budget - 7_000);
    for &l in &w.clients[..2] {
        assert_eq!(w.ledger.escrow(l), 0);
        assert_eq!(w.fb.client(l).unwrap().status, ClientStatus::Idle);
    }
    for &win in &winners {
        assert_eq!(w.ledger.escrow(win), DEPOSIT);
        assert_eq!(w.fb.client(win).unwrap().status, ClientStatus::Winner);
    }
    assert_reverts(&mut w, |w| {
        let c = w.clients[0];
        w.fb.place_bid(&mut w.ledger, c, offer(500.0, 1), 1001)
    });
}

#[test]
fn settlement_pays_and_refunds() {
    let mut w = registered_open(3, 2);
    trained(&mut w, &[(0, 110.0, 1_000), (1, 120.0, 2_000), (2, 130.0, 3_000)]);
    let pub_before = (w.ledger.balance(w.publisher), w.ledger.escrow(w.publisher));
    let c2_before = w.ledger.balance(w.clients[2]);
    let rec = w.fb.settle(&mut w.ledger, w.publisher, 1000).unwrap();
    assert_eq!(rec.fees_paid, vec![(w.clients[2], 3_000), (w.clients[1], 2_000)]);
    assert_eq!(rec.publisher_refund, requirements(2).budget - 5_000);
    assert_eq!(rec.total_refunded(), 2 * DEPOSIT as u128);
    assert_eq!(rec.total_forfeited(), 0);
    assert_eq!(w.ledger.balance(w.clients[2]), c2_before + 3_000 + DEPOSIT);
    let settle_fee = w.ledger.quote("settle", PRICE).unwrap();
    assert_eq!(w.ledger.balance(w.publisher), pub_before.0 + pub_before.1 - settle_fee);
    assert!(w.ledger.accounts().all(|a| a.escrow == 0));
    assert_eq!(w.fb.phase(), Some(Phase::Settled));
    assert_eq!(w.ledger.total_supply(), w.ledger.minted());

    let d = w.fb.get_reward(&mut w.ledger, w.clients[2]).unwrap();
    assert_eq!(w.ledger.content_get(&d).unwrap(), b"model");
    assert!(matches!(
        assert_reverts(&mut w, |w| {
            let c = w.clients[0];
            w.fb.get_reward(&mut w.ledger, c)
        }),
        ContractError::NotWinner(_)
    ));
}

#[test]
fn dropouts_forfeit() {
    let mut w = registered_open(3, 2);
    trained(&mut w, &[(0, 110.0, 1_000), (1, 120.0, 2_000), (2, 130.0, 3_000)]);
    let drop = w.clients[1];
    assert!(matches!(
        assert_reverts(&mut w, |w| {
            let c = w.clients[0];
            w.fb.mark_dropout(&mut w.ledger, c, drop)
        }),
        ContractError::NotPublisher
    ));
    w.fb.mark_dropout(&mut w.ledger, w.publisher, drop).unwrap();
    assert_reverts(&mut w, |w| w.fb.mark_dropout(&mut w.ledger, w.publisher, drop));
    let before = w.ledger.balance(drop);
    let rec = w.fb.settle(&mut w.ledger, w.publisher, 1000).unwrap();
    assert_eq!(rec.deposits_forfeited, vec![(drop, DEPOSIT)]);
    assert_eq!(rec.fees_paid, vec![(w.clients[2], 3_000)]);
    assert_eq!(rec.publisher_refund, requirements(2).budget - 3_000);
    assert_eq!(w.ledger.balance(drop), before);
    assert_eq!(w.fb.client(drop).unwrap().status, ClientStatus::DroppedOut);
    assert_reverts(&mut w, |w| w.fb.get_reward(&mut w.ledger, drop));
}

#[test]
fn settle_preconditions() {
    let mut w = registered_open(3, 2);
    for (i, c) in [0usize, 1].into_iter().enumerate() {
        w.fb.place_bid(&mut w.ledger, w.clients[c], offer(110.0 + i as f64, 10), i as u64)
            .unwrap();
    }
    w.fb.select_top_x(&mut w.ledger, w.publisher, 500).unwrap();
    w.fb.begin_training(&mut w.ledger, w.publisher).unwrap();
    assert!(matches!(
        assert_reverts(&mut w, |w| w.fb.settle(&mut w.ledger, w.publisher, 1000)),
        ContractError::TrainingIncomplete
    ));
    let unknown = Digest::of(b"never stored");
    assert!(matches!(
        assert_reverts(&mut w, |w| w.fb.add_model_hash(
            &mut w.ledger,
            w.publisher,
            unknown,
            true
        )),
        ContractError::UnknownDigest(_)
    ));
    let d = w.ledger.content_put(b"m");
    w.fb.add_model_hash(&mut w.ledger, w.publisher, d, true).unwrap();
    assert!(matches!(
        assert_reverts(&mut w, |w| w.fb.settle(&mut w.ledger, w.publisher, 999)),
        ContractError::TooEarly { .. }
    ));
    w.fb.settle(&mut w.ledger, w.publisher, 1000).unwrap();
}

#[test]
fn too_few_offers_block_settlement() {
    let mut w = registered_open(3, 3);
    trained(&mut w, &[(0, 110.0, 1_000), (1, 120.0, 2_000)]);
    assert!(matches!(
        assert_reverts(&mut w, |w| w.fb.settle(&mut w.ledger, w.publisher, 1000)),
        ContractError::InsufficientOffers { bids: 2, required: 3 }
    ));
}

#[test]
fn auction_can_rerun_after_settlement() {
    let mut w = registered_open(2, 1);
    assert_eq!(
        assert_reverts(&mut w, |w| w.fb.open_auction(
            &mut w.ledger,
            w.publisher,
            requirements(1),
            0
        )),
        ContractError::AuctionExists
    );
    trained(&mut w, &[(0, 110.0, 1_000)]);
    w.fb.settle(&mut w.ledger, w.publisher, 1000).unwrap();
    // The winner's deposit came back; the idle client still holds one.
    w.fb.register_client(&mut w.ledger, w.clients[0], DEPOSIT).unwrap();
    let idle = w.clients[1];
    assert_reverts(&mut w, |w| w.fb.register_client(&mut w.ledger, idle, DEPOSIT));
    let mut req = requirements(1);
    req.closing_time = 2000;
    w.fb.open_auction(&mut w.ledger, w.publisher, req, 1500).unwrap();
    assert!(w.fb.settlement().is_none());
    assert_eq!(w.ledger.total_supply(), w.ledger.minted());
}

#[test]
fn every_op_is_metered() {
    let mut w = registered_open(2, 2);
    trained(&mut w, &[(0, 110.0, 1_000), (1, 120.0, 2_000)]);
    w.fb.mark_dropout(&mut w.ledger, w.publisher, w.clients[0]).unwrap();
    w.fb.settle(&mut w.ledger, w.publisher, 1000).unwrap();
    w.fb.get_reward(&mut w.ledger, w.clients[1]).unwrap();
    let ops: BTreeSet<&str> = w.ledger.pending().iter().map(|t| t.op_name.as_str()).collect();
    for op in crate::ledger::CONTRACT_OPS {
        assert!(ops.contains(op), "{op} never charged");
    }
    let fees: Gwei = w.ledger.pending().iter().map(|t| t.fee).sum();
    assert_eq!(fees, w.ledger.fees_collected());
}

/// Independent ranking: repeatedly pick the best remaining bid whose bidder
/// is not yet chosen, comparing score, then timestamp, then book position.
fn rank_oracle(book: &[Bid], top_x: usize) -> Vec<Address> {
    let mut chosen: Vec<Address> = Vec::new();
    while chosen.len() < top_x {
        let mut best: Option<(usize, &Bid)> = None;
        for (i, b) in book.iter().enumerate() {
            if chosen.contains(&b.bidder) {
                continue;
            }
            let better = match best {
                None => true,
                Some((j, c)) => b.score > c.score || (b.score == c.score && (b.timestamp, i) < (c.timestamp, j)),
            };
            if better {
                best = Some((i, b));
            }
        }
        match best {
            Some((_, b)) => chosen.push(b.bidder),
            None => break,
        }
    }
    chosen
}

proptest! {
    #[test]
    fn ranking_matches_oracle(
        raw in prop::collection::vec((0u8..6, 0u8..8, 0u64..5), 0..25),
        top_x in 1usize..8,
    ) {
        // Book timestamps never decrease.
        let mut clock = 0u64;
        let book: Vec<Bid> = raw
            .iter()
            .map(|&(who, score, dt)| Bid {
                bidder: Address([who; 20]),
                offered_compute: 0.0,
                offered_bandwidth: 0.0,
                offered_data_size: 0,
                offered_data_type: String::new(),
                price: 0,
                timestamp: { clock += dt % 2; clock },
                score: score as f64,
            })
            .collect();
        let got: Vec<Address> = rank_bidders(&book, top_x).iter().map(|b| b.bidder).collect();
        prop_assert_eq!(got, rank_oracle(&book, top_x));
    }

    #[test]
    fn random_sessions_conserve_value(
        actions in prop::collection::vec((0u8..8, 0usize..4, 50u32..400, 0u64..200_000_000), 1..40),
    ) {
        let mut w = world(4);
        let _ = w.fb.register_publisher(&mut w.ledger, w.publisher);
        let mut now = 0u64;
        for (kind, who, compute, amount) in actions {
            let c = w.clients[who];
            let before_ledger = w.ledger.snapshot();
            let before_fb = w.fb.clone();
            let r = match kind {
                0 => w.fb.register_client(&mut w.ledger, c, DEPOSIT).map(|_| ()),
                1 => w.fb.open_auction(&mut w.ledger, w.publisher, requirements(2), now).map(|_| ()),
                2 => w.fb.place_bid(&mut w.ledger, c, offer(compute as f64, amount), now).map(|_| ()),
                3 => w.fb.select_top_x(&mut w.ledger, w.publisher, now).map(|_| ()),
                4 => w.fb.begin_training(&mut w.ledger, w.publisher),
                5 => w.fb.mark_dropout(&mut w.ledger, w.publisher, c),
                6 => {
                    let d = w.ledger.content_put(b"m");
                    w.fb.add_model_hash(&mut w.ledger, w.publisher, d, amount % 2 == 0)
                }
                _ => w.fb.settle(&mut w.ledger, w.publisher, now).map(|_| ()),
            };
            if r.is_err() {
                // The content store is outside consensus state; compare the rest.
                let strip = |s: &str| s.lines().filter(|l| !l.starts_with("content")).collect::<Vec<_>>().join("\n");
                prop_assert_eq!(strip(&w.ledger.snapshot()), strip(&before_ledger));
                prop_assert_eq!(&w.fb, &before_fb);
            }
            prop_assert_eq!(w.ledger.total_supply(), w.ledger.minted());
            now += 97;
        }
    }
}
