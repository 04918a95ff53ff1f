use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::Gwei;

/// The eleven metered contract operations, in lifecycle order.
pub const CONTRACT_OPS: [&str; 11] = [
    "task_publisher_registration",
    "client_registration",
    "start_auction",
    "start_forward_bidding",
    "place_bid",
    "select_top_x",
    "close_auction",
    "mark_dropout",
    "add_model_hash",
    "settle",
    "get_rewards",
];

/// Gas units per operation name.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GasTable {
    entries: BTreeMap<String, u64>,
}

impl Default for GasTable {
    /// Calibrated defaults. `add_model_hash` is pinned at 381,546 units so that
    /// its cost at 23.49 gwei/gas is 8,962,515.54 gwei; `get_rewards` sits just
    /// below it. Registrations, `start_forward_bidding` and `select_top_x` form
    /// the cheap group, `start_auction` and `close_auction` the middle one.
    fn default() -> Self {
        let defaults: [(&str, u64); 11] = [
            ("task_publisher_registration", 45_612),
            ("client_registration", 48_320),
            ("start_auction", 142_775),
            ("start_forward_bidding", 52_184),
            ("place_bid", 96_218),
            ("select_top_x", 58_906),
            ("close_auction", 128_430),
            ("mark_dropout", 71_302),
            ("add_model_hash", 381_546),
            ("settle", 164_590),
            ("get_rewards", 376_204),
        ];
        Self {
            entries: defaults.iter().map(|&(k, v)| (k.to_string(), v)).collect(),
        }
    }
}

impl GasTable {
    pub fn new(entries: impl IntoIterator<Item = (String, u64)>) -> Self {
        Self {
            entries: entries.into_iter().collect(),
        }
    }

    pub fn get(&self, op: &str) -> Option<u64> {
        self.entries.get(op).copied()
    }

    pub fn set(&mut self, op: &str, gas: u64) {
        self.entries.insert(op.to_string(), gas);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.entries.iter().map(|(k, &v)| (k.as_str(), v))
    }

    /// True when every contract operation has a positive entry.
    pub fn covers_contract_ops(&self) -> bool {
        CONTRACT_OPS.iter().all(|op| self.get(op).is_some_and(|g| g > 0))
    }
}

/// Gas prices in gwei per gas unit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GasPrices {
    pub min: f64,
    pub avg: f64,
}

impl Default for GasPrices {
    fn default() -> Self {
        Self { min: 11.27, avg: 23.49 }
    }
}

/// Fee charged for `gas` units at `price` gwei/gas, rounded up to whole gwei.
///
/// The price is fixed to micro-gwei precision first so that products such as
/// 100 x 0.1 do not pick up a spurious extra gwei from binary rounding.
pub fn fee_for(gas: u64, price: f64) -> Gwei {
    assert!(price >= 0.0 && price.is_finite(), "invalid gas price {price}");
    let micro = (price * 1e6).round() as u128;
    let total = gas as u128 * micro;
    total.div_ceil(1_000_000) as Gwei
}

#[derive(Clone, Debug, PartialEq)]
pub struct GasCostRow {
    pub op: String,
    pub gas_used: u64,
    pub cost_min_gwei: f64,
    pub cost_avg_gwei: f64,
}

/// Cost of every table entry at both prices; rows follow [`CONTRACT_OPS`]
/// order, then any extra entries alphabetically.
pub fn gas_cost_report(table: &GasTable, prices: GasPrices) -> Vec<GasCostRow> {
    let ordered = CONTRACT_OPS
        .iter()
        .filter_map(|&op| table.get(op).map(|g| (op, g)))
        .chain(table.iter().filter(|(op, _)| !CONTRACT_OPS.contains(op)));
    ordered
        .map(|(op, gas)| GasCostRow {
            op: op.to_string(),
            gas_used: gas,
            cost_min_gwei: gas as f64 * prices.min,
            cost_avg_gwei: gas as f64 * prices.avg,
        })
        .collect()
}

pub const GAS_REPORT_HEADER: &str = "op,gas_used,cost_min_gwei,cost_avg_gwei";

pub fn gas_report_csv(rows: &[GasCostRow]) -> String {
    let mut out = String::from(GAS_REPORT_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{:.2},{:.2}",
            r.op, r.gas_used, r.cost_min_gwei, r.cost_avg_gwei
        )
        .unwrap();
    }
    out
}
