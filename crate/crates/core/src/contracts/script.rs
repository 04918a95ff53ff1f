//! Plain-text scenario scripts driving the contracts.
//!
//! One call per line: `<time> <caller> <op> [args...]`. Blank lines and `#`
//! comments are ignored. Names become ledger accounts (zero balance) in order
//! of first appearance; calls run sorted by time, then caller address, with
//! file order kept for ties.
//!
//! | op | args |
//! |----|------|
//! | `fund` | `<gwei>` |
//! | `register_publisher` | |
//! | `register_client` | `<deposit>` |
//! | `open_auction` | `min_compute= min_bandwidth= data_type= min_data_size= iterations= budget= deposit= closing= top_x=` |
//! | `place_bid` | `compute= bandwidth= data_size= data_type= price=` |
//! | `select_top_x`, `begin_training`, `settle`, `get_reward`, `seal` | |
//! | `mark_dropout` | `<client name>` |
//! | `add_model_hash` | `<content> [final]` |

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use super::{BidOffer, ContractError, ForwardBidding, ScoreWeights, TaskRequirements};
use crate::ledger::{Address, GasTable, Gwei, Ledger};

#[derive(Clone, Debug, PartialEq)]
pub enum ScriptOp {
    Fund(Gwei),
    RegisterPublisher,
    RegisterClient { deposit: Gwei },
    OpenAuction(TaskRequirements),
    PlaceBid(BidOffer),
    SelectTopX,
    BeginTraining,
    MarkDropout { client: String },
    AddModelHash { content: String, final_model: bool },
    Settle,
    GetReward,
    Seal,
}

impl ScriptOp {
    pub fn name(&self) -> &'static str {
        match self {
            ScriptOp::Fund(_) => "fund",
            ScriptOp::RegisterPublisher => "register_publisher",
            ScriptOp::RegisterClient { .. } => "register_client",
            ScriptOp::OpenAuction(_) => "open_auction",
            ScriptOp::PlaceBid(_) => "place_bid",
            ScriptOp::SelectTopX => "select_top_x",
            ScriptOp::BeginTraining => "begin_training",
            ScriptOp::MarkDropout { .. } => "mark_dropout",
            ScriptOp::AddModelHash { .. } => "add_model_hash",
            ScriptOp::Settle => "settle",
            ScriptOp::GetReward => "get_reward",
            ScriptOp::Seal => "seal",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScriptLine {
    pub line_no: usize,
    pub time: u64,
    pub caller: String,
    pub op: ScriptOp,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("line {line}: {message}")]
pub struct ScriptError {
    pub line: usize,
    pub message: String,
}

fn err<T>(line: usize, message: impl Into<String>) -> Result<T, ScriptError> {
    Err(ScriptError {
        line,
        message: message.into(),
    })
}

fn num<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T, ScriptError> {
    v.parse().or_else(|_| err(line, format!("bad value {v:?} for {key}")))
}

fn key_values<'a>(line: usize, args: &[&'a str], keys: &[&str]) -> Result<BTreeMap<String, &'a str>, ScriptError> {
    let mut map = BTreeMap::new();
    for a in args {
        let Some((k, v)) = a.split_once('=') else {
            return err(line, format!("expected key=value, got {a:?}"));
        };
        if !keys.contains(&k) {
            return err(line, format!("unknown key {k:?}"));
        }
        if map.insert(k.to_string(), v).is_some() {
            return err(line, format!("duplicate key {k:?}"));
        }
    }
    for k in keys {
        if !map.contains_key(*k) {
            return err(line, format!("missing key {k:?}"));
        }
    }
    Ok(map)
}

pub fn parse_script(text: &str) -> Result<Vec<ScriptLine>, ScriptError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let toks: Vec<&str> = content.split_whitespace().collect();
        if toks.len() < 3 {
            return err(line, "expected <time> <caller> <op> [args]");
        }
        let time: u64 = num(line, "time", toks[0])?;
        let caller = toks[1].to_string();
        let args = &toks[3..];
        let no_args = |op: ScriptOp| {
            if args.is_empty() {
                Ok(op)
            } else {
                err(line, format!("{} takes no arguments", op.name()))
            }
        };
        let single = |what: &str| -> Result<&str, ScriptError> {
            match args {
                [a] => Ok(a),
                _ => err(line, format!("expected one argument: {what}")),
            }
        };
        let op = match toks[2] {
            "fund" => ScriptOp::Fund(num(line, "amount", single("amount")?)?),
            "register_publisher" => no_args(ScriptOp::RegisterPublisher)?,
            "register_client" => ScriptOp::RegisterClient {
                deposit: num(line, "deposit", single("deposit")?)?,
            },
            "open_auction" => {
                let kv = key_values(
                    line,
                    args,
                    &[
                        "min_compute",
                        "min_bandwidth",
                        "data_type",
                        "min_data_size",
                        "iterations",
                        "budget",
                        "deposit",
                        "closing",
                        "top_x",
                    ],
                )?;
                ScriptOp::OpenAuction(TaskRequirements {
                    min_compute: num(line, "min_compute", kv["min_compute"])?,
                    min_bandwidth: num(line, "min_bandwidth", kv["min_bandwidth"])?,
                    data_type: kv["data_type"].to_string(),
                    min_data_size: num(line, "min_data_size", kv["min_data_size"])?,
                    iterations: num(line, "iterations", kv["iterations"])?,
                    budget: num(line, "budget", kv["budget"])?,
                    security_deposit: num(line, "deposit", kv["deposit"])?,
                    closing_time: num(line, "closing", kv["closing"])?,
                    top_x: num(line, "top_x", kv["top_x"])?,
                })
            }
            "place_bid" => {
                let kv = key_values(line, args, &["compute", "bandwidth", "data_size", "data_type", "price"])?;
                ScriptOp::PlaceBid(BidOffer {
                    compute: num(line, "compute", kv["compute"])?,
                    bandwidth: num(line, "bandwidth", kv["bandwidth"])?,
                    data_size: num(line, "data_size", kv["data_size"])?,
                    data_type: kv["data_type"].to_string(),
                    price: num(line, "price", kv["price"])?,
                })
            }
            "select_top_x" => no_args(ScriptOp::SelectTopX)?,
            "begin_training" => no_args(ScriptOp::BeginTraining)?,
            "mark_dropout" => ScriptOp::MarkDropout {
                client: single("client name")?.to_string(),
            },
            "add_model_hash" => match args {
                [c] => ScriptOp::AddModelHash {
                    content: c.to_string(),
                    final_model: false,
                },
                [c, "final"] => ScriptOp::AddModelHash {
                    content: c.to_string(),
                    final_model: true,
                },
                _ => return err(line, "expected <content> [final]"),
            },
            "settle" => no_args(ScriptOp::Settle)?,
            "get_reward" => no_args(ScriptOp::GetReward)?,
            "seal" => no_args(ScriptOp::Seal)?,
            other => return err(line, format!("unknown op {other:?}")),
        };
        out.push(ScriptLine {
            line_no: line,
            time,
            caller,
            op,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub line_no: usize,
    pub time: u64,
    pub caller: String,
    pub op: &'static str,
    /// Short description on success, the revert reason otherwise.
    pub result: Result<String, ContractError>,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} ", self.time, self.caller, self.op)?;
        match &self.result {
            Ok(s) if s.is_empty() => write!(f, "ok"),
            Ok(s) => write!(f, "ok {s}"),
            Err(e) => write!(f, "revert: {e}"),
        }
    }
}

/// Ledger, contracts and per-call outcomes after running a script.
#[derive(Clone, Debug)]
pub struct ScriptRun {
    pub ledger: Ledger,
    pub contracts: ForwardBidding,
    pub names: BTreeMap<String, Address>,
    pub outcomes: Vec<Outcome>,
}

impl ScriptRun {
    pub fn address(&self, name: &str) -> Option<Address> {
        self.names.get(name).copied()
    }

    pub fn name_of(&self, addr: Address) -> Option<&str> {
        self.names.iter().find(|(_, &a)| a == addr).map(|(n, _)| n.as_str())
    }

    /// One line per executed call.
    pub fn trace(&self) -> String {
        self.outcomes.iter().map(|o| format!("{o}\n")).collect()
    }
}

pub fn run_script(lines: &[ScriptLine], gas_table: GasTable, gas_price: f64, weights: ScoreWeights) -> ScriptRun {
    let mut ledger = Ledger::new(gas_table);
    let mut contracts = ForwardBidding::deploy(&mut ledger, gas_price, weights);
    let mut names = BTreeMap::new();
    for l in lines {
        let mut touch = |n: &str| {
            if !names.contains_key(n) {
                names.insert(n.to_string(), ledger.create_account(0));
            }
        };
        touch(&l.caller);
        if let ScriptOp::MarkDropout { client } = &l.op {
            touch(client);
        }
    }
    let mut order: Vec<&ScriptLine> = lines.iter().collect();
    order.sort_by_key(|l| (l.time, names[&l.caller]));

    let mut outcomes = Vec::with_capacity(order.len());
    for l in order {
        let caller = names[&l.caller];
        let result = execute(&mut ledger, &mut contracts, &names, caller, l);
        outcomes.push(Outcome {
            line_no: l.line_no,
            time: l.time,
            caller: l.caller.clone(),
            op: l.op.name(),
            result,
        });
    }
    ScriptRun {
        ledger,
        contracts,
        names,
        outcomes,
    }
}

fn execute(
    ledger: &mut Ledger,
    fb: &mut ForwardBidding,
    names: &BTreeMap<String, Address>,
    caller: Address,
    l: &ScriptLine,
) -> Result<String, ContractError> {
    let name_of = |a: &Address| {
        names
            .iter()
            .find(|(_, v)| *v == a)
            .map(|(n, _)| n.clone())
            .unwrap_or_else(|| a.to_string())
    };
    let now = l.time;
    match &l.op {
        ScriptOp::Fund(amount) => {
            ledger.mint(caller, *amount)?;
            Ok(String::new())
        }
        ScriptOp::RegisterPublisher => fb.register_publisher(ledger, caller).map(|_| String::new()),
        ScriptOp::RegisterClient { deposit } => fb.register_client(ledger, caller, *deposit).map(|_| String::new()),
        ScriptOp::OpenAuction(req) => fb.open_auction(ledger, caller, req.clone(), now).map(|_| String::new()),
        ScriptOp::PlaceBid(offer) => fb
            .place_bid(ledger, caller, offer.clone(), now)
            .map(|b| format!("score={:.6}", b.score)),
        ScriptOp::SelectTopX => fb
            .select_top_x(ledger, caller, now)
            .map(|w| format!("winners={}", w.iter().map(name_of).collect::<Vec<_>>().join(","))),
        ScriptOp::BeginTraining => fb.begin_training(ledger, caller).map(|_| String::new()),
        ScriptOp::MarkDropout { client } => fb.mark_dropout(ledger, caller, names[client]).map(|_| String::new()),
        ScriptOp::AddModelHash { content, final_model } => {
            let digest = ledger.content_put(content.as_bytes());
            fb.add_model_hash(ledger, caller, digest, *final_model)
                .map(|_| format!("digest={}", digest.to_hex()))
        }
        ScriptOp::Settle => fb.settle(ledger, caller, now).map(|r| {
            format!(
                "fees={} refunded={} forfeited={} publisher_refund={}",
                r.total_fees(),
                r.total_refunded(),
                r.total_forfeited(),
                r.publisher_refund
            )
        }),
        ScriptOp::GetReward => fb.get_reward(ledger, caller).map(|d| format!("digest={}", d.to_hex())),
        ScriptOp::Seal => {
            let b = ledger.seal_block();
            Ok(format!("height={} txs={}", b.height, b.transactions.len()))
        }
    }
}
