//! Registration, forward-bidding and settlement contracts executed on the
//! simulated [`Ledger`].
//!
//! Every call validates all of its preconditions (gas included) before it
//! touches the ledger, so a failing call is a revert: ledger and contract
//! state are left exactly as they were.
//!
//! Fund flow for one auction:
//! - client registration locks the security deposit in the client's escrow;
//! - opening the auction locks the publisher's budget in its escrow;
//! - selection moves the winners' bid prices from the publisher's escrow into
//!   the contract's payout pool and releases losing bidders' deposits;
//! - settlement pays each surviving winner its bid price from the pool,
//!   refunds the rest of the budget to the publisher, returns surviving
//!   winners' deposits and forfeits dropouts' deposits to the publisher.

pub mod script;

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::ledger::{Address, Digest, Gwei, Ledger, LedgerError};

#[derive(Clone, Debug, PartialEq)]
pub struct TaskRequirements {
    /// Compute units per second.
    pub min_compute: f64,
    /// KB per second.
    pub min_bandwidth: f64,
    pub data_type: String,
    /// Sample count.
    pub min_data_size: u64,
    pub iterations: u32,
    pub budget: Gwei,
    /// Deposit every bidder must hold (the auction "rate").
    pub security_deposit: Gwei,
    /// Virtual seconds; bids are accepted while `now < closing_time`.
    pub closing_time: u64,
    pub top_x: usize,
}

impl TaskRequirements {
    pub fn validate(&self) -> Result<(), ContractError> {
        let bad = |what: &str| Err(ContractError::InvalidRequirements(what.to_string()));
        if !(self.min_compute > 0.0 && self.min_compute.is_finite()) {
            return bad("min_compute must be positive");
        }
        if !(self.min_bandwidth > 0.0 && self.min_bandwidth.is_finite()) {
            return bad("min_bandwidth must be positive");
        }
        if self.min_data_size == 0 || self.iterations == 0 {
            return bad("min_data_size and iterations must be positive");
        }
        if self.budget == 0 || self.security_deposit == 0 || self.closing_time == 0 {
            return bad("budget, security_deposit and closing_time must be positive");
        }
        if self.top_x == 0 {
            return bad("top_x must be at least 1");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum ClientStatus {
    /// Registered before, deposit no longer held.
    Idle,
    /// Registered with the deposit locked.
    Registered,
    Bidding,
    Winner,
    Training,
    DroppedOut,
    Paid,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClientRecord {
    pub address: Address,
    pub registered: bool,
    pub deposit_held: Gwei,
    pub status: ClientStatus,
}

/// What a client puts forward when bidding.
#[derive(Clone, Debug, PartialEq)]
pub struct BidOffer {
    pub compute: f64,
    pub bandwidth: f64,
    pub data_size: u64,
    pub data_type: String,
    pub price: Gwei,
}

/// An accepted bid as stored in the book.
#[derive(Clone, Debug, PartialEq)]
pub struct Bid {
    pub bidder: Address,
    pub offered_compute: f64,
    pub offered_bandwidth: f64,
    pub offered_data_size: u64,
    pub offered_data_type: String,
    pub price: Gwei,
    pub timestamp: u64,
    pub score: f64,
}

/// Weights of the composite bid score.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoreWeights {
    pub compute: f64,
    pub bandwidth: f64,
    pub data_size: f64,
    pub price: f64,
}

impl Default for ScoreWeights {
    fn default() -> Self {
        Self {
            compute: 0.4,
            bandwidth: 0.2,
            data_size: 0.3,
            price: 0.1,
        }
    }
}

impl ScoreWeights {
    /// Resources are normalised by their requirement, price by the budget.
    pub fn score(&self, offer: &BidOffer, req: &TaskRequirements) -> f64 {
        self.compute * offer.compute / req.min_compute
            + self.bandwidth * offer.bandwidth / req.min_bandwidth
            + self.data_size * offer.data_size as f64 / req.min_data_size as f64
            - self.price * offer.price as f64 / req.budget as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Phase {
    Open,
    Closed,
    Training,
    Settled,
}

/// Notifications emitted by the contracts, in execution order.
#[derive(Clone, Debug, PartialEq)]
pub enum ContractEvent {
    AuctionOpened {
        publisher: Address,
        closing_time: u64,
    },
    BidBroadcast {
        bidder: Address,
        score: f64,
        timestamp: u64,
        bid_count: usize,
    },
    AuctionClosed {
        winners: Vec<Address>,
    },
    TrainingStarted,
    ClientDroppedOut {
        client: Address,
    },
    ModelHashAdded {
        digest: Digest,
        final_model: bool,
    },
    Settled {
        digest: Digest,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuctionState {
    pub phase: Phase,
    pub requirements: TaskRequirements,
    pub bid_book: Vec<Bid>,
    pub winners: Vec<Address>,
    /// Price each winner will be paid, keyed by winner.
    pub winner_prices: BTreeMap<Address, Gwei>,
    pub publisher: Address,
    pub model_digest: Option<Digest>,
    pub training_complete: bool,
}

impl AuctionState {
    pub fn best_score(&self) -> Option<f64> {
        self.bid_book.last().map(|b| b.score)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SettlementRecord {
    pub fees_paid: Vec<(Address, Gwei)>,
    pub deposits_refunded: Vec<(Address, Gwei)>,
    pub deposits_forfeited: Vec<(Address, Gwei)>,
    pub publisher_refund: Gwei,
    pub model_digest: Digest,
}

impl SettlementRecord {
    fn sum(items: &[(Address, Gwei)]) -> u128 {
        items.iter().map(|&(_, g)| g as u128).sum()
    }

    pub fn total_fees(&self) -> u128 {
        Self::sum(&self.fees_paid)
    }

    pub fn total_refunded(&self) -> u128 {
        Self::sum(&self.deposits_refunded)
    }

    pub fn total_forfeited(&self) -> u128 {
        Self::sum(&self.deposits_forfeited)
    }

    /// Everything paid out of escrow at settlement.
    pub fn total(&self) -> u128 {
        self.total_fees() + self.total_refunded() + self.total_forfeited() + self.publisher_refund as u128
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ContractError {
    #[error("{0} is not registered")]
    NotRegistered(Address),
    #[error("{0} is already registered")]
    AlreadyRegistered(Address),
    #[error("invalid requirements: {0}")]
    InvalidRequirements(String),
    #[error("no auction has been opened")]
    NoAuction,
    #[error("operation needs phase {expected:?}, auction is {actual:?}")]
    WrongPhase { expected: Phase, actual: Phase },
    #[error("an auction already exists")]
    AuctionExists,
    #[error("bidding closed at {closing_time}, now {now}")]
    BiddingClosed { now: u64, closing_time: u64 },
    #[error("not allowed before closing time {closing_time} (now {now})")]
    TooEarly { now: u64, closing_time: u64 },
    #[error("deposit held {held} differs from required rate {required}")]
    DepositMismatch { held: Gwei, required: Gwei },
    #[error("offer does not meet requirements: {0}")]
    UnderResourced(String),
    #[error("bid price {price} exceeds budget headroom {headroom}")]
    OverBudget { price: Gwei, headroom: Gwei },
    #[error("offer score {offered} does not exceed current best {best}")]
    NonImprovingScore { offered: f64, best: f64 },
    #[error("no bids were placed")]
    NoBids,
    #[error("only the task publisher may call this")]
    NotPublisher,
    #[error("{0} is not a winner of this auction")]
    NotWinner(Address),
    #[error("{0} dropped out")]
    DroppedOut(Address),
    #[error("model digest {0} is not in the content store")]
    UnknownDigest(Digest),
    #[error("training is not complete")]
    TrainingIncomplete,
    #[error("only {bids} bids placed, {required} required")]
    InsufficientOffers { bids: usize, required: usize },
    #[error("deposit must be positive")]
    ZeroDeposit,
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

/// The three contracts sharing one registry and one auction.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardBidding {
    contract: Address,
    gas_price: f64,
    weights: ScoreWeights,
    publishers: BTreeSet<Address>,
    clients: BTreeMap<Address, ClientRecord>,
    auction: Option<AuctionState>,
    settlement: Option<SettlementRecord>,
    events: Vec<ContractEvent>,
}

impl ForwardBidding {
    /// Deploys the contracts, creating the payout-pool account on `ledger`.
    pub fn deploy(ledger: &mut Ledger, gas_price: f64, weights: ScoreWeights) -> Self {
        Self {
            contract: ledger.create_account(0),
            gas_price,
            weights,
            publishers: BTreeSet::new(),
            clients: BTreeMap::new(),
            auction: None,
            settlement: None,
            events: Vec::new(),
        }
    }

    pub fn contract_address(&self) -> Address {
        self.contract
    }

    pub fn gas_price(&self) -> f64 {
        self.gas_price
    }

    pub fn weights(&self) -> &ScoreWeights {
        &self.weights
    }

    pub fn auction(&self) -> Option<&AuctionState> {
        self.auction.as_ref()
    }

    pub fn phase(&self) -> Option<Phase> {
        self.auction.as_ref().map(|a| a.phase)
    }

    pub fn client(&self, addr: Address) -> Option<&ClientRecord> {
        self.clients.get(&addr)
    }

    pub fn clients(&self) -> impl Iterator<Item = &ClientRecord> {
        self.clients.values()
    }

    pub fn is_publisher(&self, addr: Address) -> bool {
        self.publishers.contains(&addr)
    }

    pub fn settlement(&self) -> Option<&SettlementRecord> {
        self.settlement.as_ref()
    }

    pub fn events(&self) -> &[ContractEvent] {
        &self.events
    }

    /// Drains and returns events emitted since the last call.
    pub fn take_events(&mut self) -> Vec<ContractEvent> {
        std::mem::take(&mut self.events)
    }

    fn require_gas(&self, ledger: &Ledger, caller: Address, ops: &[&str], extra: Gwei) -> Result<(), ContractError> {
        let mut fee: u128 = 0;
        for op in ops {
            fee += ledger.quote(op, self.gas_price)? as u128;
        }
        let available = ledger.account(caller)?.balance;
        let needed = fee + extra as u128;
        if (available as u128) < needed {
            return Err(if extra == 0 {
                LedgerError::InsufficientGas {
                    fee: fee as Gwei,
                    available,
                }
            } else {
                LedgerError::InsufficientFunds {
                    needed: needed.min(Gwei::MAX as u128) as Gwei,
                    available,
                }
            }
            .into());
        }
        Ok(())
    }

    fn auction_in(&self, phase: Phase) -> Result<&AuctionState, ContractError> {
        let a = self.auction.as_ref().ok_or(ContractError::NoAuction)?;
        if a.phase != phase {
            return Err(ContractError::WrongPhase {
                expected: phase,
                actual: a.phase,
            });
        }
        Ok(a)
    }

    fn auction_mut(&mut self) -> &mut AuctionState {
        self.auction.as_mut().expect("auction checked")
    }

    fn client_mut(&mut self, addr: Address) -> &mut ClientRecord {
        self.clients.get_mut(&addr).expect("client checked")
    }

    // ---- SC1: registration ----

    pub fn register_publisher(&mut self, ledger: &mut Ledger, addr: Address) -> Result<(), ContractError> {
        if self.publishers.contains(&addr) {
            return Err(ContractError::AlreadyRegistered(addr));
        }
        self.require_gas(ledger, addr, &["task_publisher_registration"], 0)?;
        ledger.submit(addr, "task_publisher_registration", &addr.0, self.gas_price)?;
        self.publishers.insert(addr);
        Ok(())
    }

    pub fn register_client(&mut self, ledger: &mut Ledger, addr: Address, deposit: Gwei) -> Result<(), ContractError> {
        // A client whose deposit was released or forfeited may lock a new one.
        if self.clients.get(&addr).is_some_and(|c| c.deposit_held > 0) {
            return Err(ContractError::AlreadyRegistered(addr));
        }
        if deposit == 0 {
            return Err(ContractError::ZeroDeposit);
        }
        self.require_gas(ledger, addr, &["client_registration"], deposit)?;
        let mut payload = addr.0.to_vec();
        payload.extend_from_slice(&deposit.to_le_bytes());
        ledger.submit(addr, "client_registration", &payload, self.gas_price)?;
        ledger.escrow_lock(addr, deposit)?;
        self.clients.insert(
            addr,
            ClientRecord {
                address: addr,
                registered: true,
                deposit_held: deposit,
                status: ClientStatus::Registered,
            },
        );
        Ok(())
    }

    // ---- SC2: forward bidding ----

    /// Announces the task: locks the budget and opens bidding until
    /// `req.closing_time`. Charges `start_auction` and `start_forward_bidding`.
    pub fn open_auction(
        &mut self,
        ledger: &mut Ledger,
        publisher: Address,
        req: TaskRequirements,
        now: u64,
    ) -> Result<(), ContractError> {
        if !self.publishers.contains(&publisher) {
            return Err(ContractError::NotRegistered(publisher));
        }
        if self.auction.as_ref().is_some_and(|a| a.phase != Phase::Settled) {
            return Err(ContractError::AuctionExists);
        }
        req.validate()?;
        if req.closing_time <= now {
            return Err(ContractError::InvalidRequirements(format!(
                "closing time {} is not after {now}",
                req.closing_time
            )));
        }
        self.require_gas(
            ledger,
            publisher,
            &["start_auction", "start_forward_bidding"],
            req.budget,
        )?;
        ledger.submit(publisher, "start_auction", &req.budget.to_le_bytes(), self.gas_price)?;
        ledger.escrow_lock(publisher, req.budget)?;
        ledger.submit(
            publisher,
            "start_forward_bidding",
            &req.closing_time.to_le_bytes(),
            self.gas_price,
        )?;
        self.events.push(ContractEvent::AuctionOpened {
            publisher,
            closing_time: req.closing_time,
        });
        self.settlement = None;
        self.auction = Some(AuctionState {
            phase: Phase::Open,
            requirements: req,
            bid_book: Vec::new(),
            winners: Vec::new(),
            winner_prices: BTreeMap::new(),
            publisher,
            model_digest: None,
            training_complete: false,
        });
        Ok(())
    }

    /// Checks an offer against the requirements without placing it.
    pub fn check_offer(req: &TaskRequirements, offer: &BidOffer) -> Result<(), ContractError> {
        let mut missing = Vec::new();
        if !(offer.compute >= req.min_compute) {
            missing.push("compute");
        }
        if !(offer.bandwidth >= req.min_bandwidth) {
            missing.push("bandwidth");
        }
        if offer.data_size < req.min_data_size {
            missing.push("data size");
        }
        if offer.data_type != req.data_type {
            missing.push("data type");
        }
        if !missing.is_empty() {
            return Err(ContractError::UnderResourced(missing.join(", ")));
        }
        if offer.price > req.budget {
            return Err(ContractError::OverBudget {
                price: offer.price,
                headroom: req.budget,
            });
        }
        Ok(())
    }

    pub fn place_bid(
        &mut self,
        ledger: &mut Ledger,
        client: Address,
        offer: BidOffer,
        now: u64,
    ) -> Result<Bid, ContractError> {
        let record = self
            .clients
            .get(&client)
            .filter(|c| c.registered)
            .ok_or(ContractError::NotRegistered(client))?;
        let auction = self.auction_in(Phase::Open)?;
        let req = &auction.requirements;
        if now >= req.closing_time {
            return Err(ContractError::BiddingClosed {
                now,
                closing_time: req.closing_time,
            });
        }
        if record.deposit_held != req.security_deposit {
            return Err(ContractError::DepositMismatch {
                held: record.deposit_held,
                required: req.security_deposit,
            });
        }
        Self::check_offer(req, &offer)?;
        let score = self.weights.score(&offer, req);
        if let Some(best) = auction.best_score() {
            if !(score > best) {
                return Err(ContractError::NonImprovingScore { offered: score, best });
            }
        }
        self.require_gas(ledger, client, &["place_bid"], 0)?;
        let bid = Bid {
            bidder: client,
            offered_compute: offer.compute,
            offered_bandwidth: offer.bandwidth,
            offered_data_size: offer.data_size,
            offered_data_type: offer.data_type,
            price: offer.price,
            timestamp: now,
            score,
        };
        ledger.submit(client, "place_bid", &bid_payload(&bid), self.gas_price)?;
        self.client_mut(client).status = ClientStatus::Bidding;
        let book = &mut self.auction_mut().bid_book;
        book.push(bid.clone());
        let bid_count = book.len();
        self.events.push(ContractEvent::BidBroadcast {
            bidder: client,
            score,
            timestamp: now,
            bid_count,
        });
        Ok(bid)
    }

    /// Closes bidding and picks the `top_x` best bidders. The publisher may
    /// trigger it at any time; anyone else only once bidding has closed.
    pub fn select_top_x(
        &mut self,
        ledger: &mut Ledger,
        caller: Address,
        now: u64,
    ) -> Result<Vec<Address>, ContractError> {
        let auction = self.auction_in(Phase::Open)?;
        let req = &auction.requirements;
        if caller != auction.publisher && now < req.closing_time {
            return Err(ContractError::TooEarly {
                now,
                closing_time: req.closing_time,
            });
        }
        if auction.bid_book.is_empty() {
            return Err(ContractError::NoBids);
        }
        let winners = rank_bidders(&auction.bid_book, req.top_x);
        let total: u128 = winners.iter().map(|b| b.price as u128).sum();
        if total > req.budget as u128 {
            return Err(ContractError::OverBudget {
                price: total.min(Gwei::MAX as u128) as Gwei,
                headroom: req.budget,
            });
        }
        let total = total as Gwei;
        let publisher = auction.publisher;
        self.require_gas(ledger, caller, &["select_top_x"], 0)?;
        let mut payload = Vec::new();
        for w in &winners {
            payload.extend_from_slice(&w.bidder.0);
        }
        ledger.submit(caller, "select_top_x", &payload, self.gas_price)?;
        ledger.escrow_move(publisher, self.contract, total)?;

        let winner_set: BTreeSet<Address> = winners.iter().map(|b| b.bidder).collect();
        let bidders: BTreeSet<Address> = self
            .auction
            .as_ref()
            .unwrap()
            .bid_book
            .iter()
            .map(|b| b.bidder)
            .collect();
        for loser in bidders.difference(&winner_set) {
            let held = self.clients[loser].deposit_held;
            ledger.escrow_release(*loser, held, *loser)?;
            let rec = self.client_mut(*loser);
            rec.deposit_held = 0;
            rec.status = ClientStatus::Idle;
        }
        for w in &winner_set {
            self.client_mut(*w).status = ClientStatus::Winner;
        }
        let addrs: Vec<Address> = winners.iter().map(|b| b.bidder).collect();
        let a = self.auction_mut();
        a.winners = addrs.clone();
        a.winner_prices = winners.iter().map(|b| (b.bidder, b.price)).collect();
        a.phase = Phase::Closed;
        self.events
            .push(ContractEvent::AuctionClosed { winners: addrs.clone() });
        Ok(addrs)
    }

    /// Moves a closed auction into training (`close_auction` gas entry).
    pub fn begin_training(&mut self, ledger: &mut Ledger, caller: Address) -> Result<(), ContractError> {
        let auction = self.auction_in(Phase::Closed)?;
        if caller != auction.publisher {
            return Err(ContractError::NotPublisher);
        }
        self.require_gas(ledger, caller, &["close_auction"], 0)?;
        ledger.submit(caller, "close_auction", b"", self.gas_price)?;
        let winners = auction.winners.clone();
        for w in winners {
            self.client_mut(w).status = ClientStatus::Training;
        }
        self.auction_mut().phase = Phase::Training;
        self.events.push(ContractEvent::TrainingStarted);
        Ok(())
    }

    // ---- SC3: training bookkeeping and settlement ----

    pub fn mark_dropout(&mut self, ledger: &mut Ledger, caller: Address, client: Address) -> Result<(), ContractError> {
        let auction = self.auction_in(Phase::Training)?;
        if caller != auction.publisher {
            return Err(ContractError::NotPublisher);
        }
        if !auction.winners.contains(&client) {
            return Err(ContractError::NotWinner(client));
        }
        if self.clients[&client].status == ClientStatus::DroppedOut {
            return Err(ContractError::DroppedOut(client));
        }
        self.require_gas(ledger, caller, &["mark_dropout"], 0)?;
        ledger.submit(caller, "mark_dropout", &client.0, self.gas_price)?;
        self.client_mut(client).status = ClientStatus::DroppedOut;
        self.events.push(ContractEvent::ClientDroppedOut { client });
        Ok(())
    }

    /// Records a model digest already present in the content store;
    /// `final_model` marks training complete.
    pub fn add_model_hash(
        &mut self,
        ledger: &mut Ledger,
        caller: Address,
        digest: Digest,
        final_model: bool,
    ) -> Result<(), ContractError> {
        let auction = self.auction_in(Phase::Training)?;
        if caller != auction.publisher {
            return Err(ContractError::NotPublisher);
        }
        if !ledger.content_store().contains(&digest) {
            return Err(ContractError::UnknownDigest(digest));
        }
        self.require_gas(ledger, caller, &["add_model_hash"], 0)?;
        ledger.submit(caller, "add_model_hash", &digest.0, self.gas_price)?;
        let a = self.auction_mut();
        a.model_digest = Some(digest);
        a.training_complete |= final_model;
        self.events.push(ContractEvent::ModelHashAdded { digest, final_model });
        Ok(())
    }

    pub fn settle(
        &mut self,
        ledger: &mut Ledger,
        caller: Address,
        now: u64,
    ) -> Result<SettlementRecord, ContractError> {
        let auction = self.auction_in(Phase::Training)?;
        if caller != auction.publisher {
            return Err(ContractError::NotPublisher);
        }
        let req = &auction.requirements;
        if now < req.closing_time {
            return Err(ContractError::TooEarly {
                now,
                closing_time: req.closing_time,
            });
        }
        if auction.bid_book.len() < req.top_x {
            return Err(ContractError::InsufficientOffers {
                bids: auction.bid_book.len(),
                required: req.top_x,
            });
        }
        if !auction.training_complete {
            return Err(ContractError::TrainingIncomplete);
        }
        let digest = auction.model_digest.ok_or(ContractError::TrainingIncomplete)?;
        self.require_gas(ledger, caller, &["settle"], 0)?;

        let publisher = auction.publisher;
        let budget = req.budget;
        let winners = auction.winners.clone();
        let prices = auction.winner_prices.clone();
        ledger.submit(caller, "settle", &digest.0, self.gas_price)?;

        let mut record = SettlementRecord {
            model_digest: digest,
            ..SettlementRecord::default()
        };
        let dropped = |fb: &Self, w: &Address| fb.clients[w].status == ClientStatus::DroppedOut;
        // Service fees out of the payout pool; dropouts' shares go back to the publisher.
        let mut fees_paid: Gwei = 0;
        for w in &winners {
            let price = prices[w];
            if dropped(self, w) {
                ledger.escrow_release(self.contract, price, publisher)?;
            } else {
                ledger.escrow_release(self.contract, price, *w)?;
                record.fees_paid.push((*w, price));
                fees_paid += price;
            }
        }
        self.auction_mut().phase = Phase::Settled;
        self.events.push(ContractEvent::Settled { digest });
        // Residual budget back to the publisher.
        let residual = budget - prices.values().sum::<Gwei>();
        ledger.escrow_release(publisher, residual, publisher)?;
        record.publisher_refund = budget - fees_paid;
        // Security deposits: returned to participants, forfeited by dropouts.
        for w in &winners {
            let held = self.clients[w].deposit_held;
            if dropped(self, w) {
                ledger.escrow_release(*w, held, publisher)?;
                record.deposits_forfeited.push((*w, held));
            } else {
                ledger.escrow_release(*w, held, *w)?;
                record.deposits_refunded.push((*w, held));
                self.client_mut(*w).status = ClientStatus::Paid;
            }
            self.client_mut(*w).deposit_held = 0;
        }
        self.settlement = Some(record.clone());
        Ok(record)
    }

    /// Returns the final model digest to a winner that stayed to the end.
    pub fn get_reward(&mut self, ledger: &mut Ledger, client: Address) -> Result<Digest, ContractError> {
        let auction = self.auction_in(Phase::Settled)?;
        if !auction.winners.contains(&client) {
            return Err(ContractError::NotWinner(client));
        }
        if self.clients[&client].status == ClientStatus::DroppedOut {
            return Err(ContractError::DroppedOut(client));
        }
        let digest = auction.model_digest.expect("settled auctions carry a digest");
        self.require_gas(ledger, client, &["get_rewards"], 0)?;
        ledger.submit(client, "get_rewards", &digest.0, self.gas_price)?;
        Ok(digest)
    }
}

fn bid_payload(bid: &Bid) -> Vec<u8> {
    let mut p = bid.bidder.0.to_vec();
    p.extend_from_slice(&bid.offered_compute.to_le_bytes());
    p.extend_from_slice(&bid.offered_bandwidth.to_le_bytes());
    p.extend_from_slice(&bid.offered_data_size.to_le_bytes());
    p.extend_from_slice(bid.offered_data_type.as_bytes());
    p.extend_from_slice(&bid.price.to_le_bytes());
    p.extend_from_slice(&bid.timestamp.to_le_bytes());
    p
}

/// Best bid per bidder, ordered by score (descending), then earlier
/// timestamp, then earlier position in the book; truncated to `top_x`.
pub fn rank_bidders(book: &[Bid], top_x: usize) -> Vec<Bid> {
    let mut best: BTreeMap<Address, (usize, &Bid)> = BTreeMap::new();
    for (i, bid) in book.iter().enumerate() {
        let replace = match best.get(&bid.bidder) {
            None => true,
            Some((_, cur)) => bid.score > cur.score,
        };
        if replace {
            best.insert(bid.bidder, (i, bid));
        }
    }
    let mut ranked: Vec<(usize, &Bid)> = best.into_values().collect();
    ranked.sort_by(|(ia, a), (ib, b)| {
        b.score
            .total_cmp(&a.score)
            .then(a.timestamp.cmp(&b.timestamp))
            .then(ia.cmp(ib))
    });
    ranked.into_iter().take(top_x).map(|(_, b)| b.clone()).collect()
}

#[cfg(test)]
mod tests;
