//! In-process ledger: gwei balances with escrow, gas-metered transactions
//! in hash-linked blocks, and a content-addressed byte store.
//!
//! Digests are SHA-256 throughout. gwei is the atomic currency unit; no
//! conversion to ether is performed. Every mutating call either succeeds or
//! returns an error with the ledger left untouched.

mod gas;
mod store;

pub use gas::{
    fee_for, gas_cost_report, gas_report_csv, GasCostRow, GasPrices, GasTable, CONTRACT_OPS, GAS_REPORT_HEADER,
};
pub use store::ContentStore;

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;

use sha2::{Digest as _, Sha256};
use thiserror::Error;

pub type Gwei = u64;

/// 32-byte SHA-256 digest.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub const ZERO: Digest = Digest([0; 32]);

    pub fn of(bytes: &[u8]) -> Self {
        Digest(Sha256::digest(bytes).into())
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        let bytes = hex::decode(s).ok()?;
        Some(Digest(bytes.try_into().ok()?))
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", &self.to_hex()[..16])
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// 20-byte account identifier.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Address(pub [u8; 20]);

impl Address {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", &self.to_hex()[..8])
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", self.to_hex())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Account {
    pub address: Address,
    pub balance: Gwei,
    pub escrow: Gwei,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transaction {
    pub caller: Address,
    pub op_name: String,
    pub payload_digest: Digest,
    pub gas_used: u64,
    pub fee: Gwei,
    pub block_height: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    pub height: u64,
    pub parent_digest: Digest,
    pub transactions: Vec<Transaction>,
    pub digest: Digest,
}

impl Block {
    pub fn compute_digest(height: u64, parent: &Digest, txs: &[Transaction]) -> Digest {
        let mut h = Sha256::new();
        h.update(height.to_le_bytes());
        h.update(parent.0);
        h.update((txs.len() as u64).to_le_bytes());
        for tx in txs {
            h.update(tx.caller.0);
            h.update((tx.op_name.len() as u64).to_le_bytes());
            h.update(tx.op_name.as_bytes());
            h.update(tx.payload_digest.0);
            h.update(tx.gas_used.to_le_bytes());
            h.update(tx.fee.to_le_bytes());
            h.update(tx.block_height.to_le_bytes());
        }
        Digest(h.finalize().into())
    }

    pub fn verify_digest(&self) -> bool {
        Self::compute_digest(self.height, &self.parent_digest, &self.transactions) == self.digest
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LedgerError {
    #[error("unknown account {0}")]
    UnknownAccount(Address),
    #[error("insufficient balance: need {needed} gwei, have {available}")]
    InsufficientFunds { needed: Gwei, available: Gwei },
    #[error("insufficient escrow: need {needed} gwei, have {available}")]
    InsufficientEscrow { needed: Gwei, available: Gwei },
    #[error("operation '{0}' has no gas table entry")]
    UnknownOp(String),
    #[error("balance {available} gwei cannot cover gas fee {fee}")]
    InsufficientGas { fee: Gwei, available: Gwei },
    #[error("no content stored under {0}")]
    NotFound(Digest),
}

/// Balance movement summary returned by fund-moving calls.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Receipt {
    pub amount: Gwei,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ledger {
    accounts: BTreeMap<Address, Account>,
    next_index: u64,
    fee_sink: Address,
    gas_table: GasTable,
    blocks: Vec<Block>,
    pending: Vec<Transaction>,
    store: ContentStore,
    minted: u128,
}

impl Default for Ledger {
    fn default() -> Self {
        Self::new(GasTable::default())
    }
}

impl Ledger {
    /// Fresh ledger with a sealed genesis block and an empty fee sink.
    pub fn new(gas_table: GasTable) -> Self {
        let genesis = Block {
            height: 0,
            parent_digest: Digest::ZERO,
            transactions: Vec::new(),
            digest: Block::compute_digest(0, &Digest::ZERO, &[]),
        };
        let mut ledger = Self {
            accounts: BTreeMap::new(),
            next_index: 0,
            fee_sink: Address([0; 20]),
            gas_table,
            blocks: vec![genesis],
            pending: Vec::new(),
            store: ContentStore::default(),
            minted: 0,
        };
        ledger.fee_sink = ledger.create_account(0);
        ledger
    }

    fn derive_address(index: u64) -> Address {
        let mut h = Sha256::new();
        h.update(b"fedchain/account");
        h.update(index.to_le_bytes());
        let d: [u8; 32] = h.finalize().into();
        Address(d[..20].try_into().unwrap())
    }

    pub fn create_account(&mut self, initial_balance: Gwei) -> Address {
        let address = Self::derive_address(self.next_index);
        self.next_index += 1;
        self.accounts.insert(
            address,
            Account {
                address,
                balance: initial_balance,
                escrow: 0,
            },
        );
        self.minted += initial_balance as u128;
        address
    }

    /// Credits freshly created funds to an existing account.
    pub fn mint(&mut self, addr: Address, amount: Gwei) -> Result<Receipt, LedgerError> {
        self.account(addr)?;
        self.acct(addr).balance += amount;
        self.minted += amount as u128;
        Ok(Receipt { amount })
    }

    pub fn fee_sink(&self) -> Address {
        self.fee_sink
    }

    pub fn gas_table(&self) -> &GasTable {
        &self.gas_table
    }

    pub fn account(&self, addr: Address) -> Result<&Account, LedgerError> {
        self.accounts.get(&addr).ok_or(LedgerError::UnknownAccount(addr))
    }

    pub fn accounts(&self) -> impl Iterator<Item = &Account> {
        self.accounts.values()
    }

    pub fn balance(&self, addr: Address) -> Gwei {
        self.accounts.get(&addr).map_or(0, |a| a.balance)
    }

    pub fn escrow(&self, addr: Address) -> Gwei {
        self.accounts.get(&addr).map_or(0, |a| a.escrow)
    }

    /// Sum of balance and escrow over every account, fee sink included.
    pub fn total_supply(&self) -> u128 {
        self.accounts
            .values()
            .map(|a| a.balance as u128 + a.escrow as u128)
            .sum()
    }

    /// Total ever created through `create_account`.
    pub fn minted(&self) -> u128 {
        self.minted
    }

    fn require_balance(&self, addr: Address, needed: Gwei) -> Result<(), LedgerError> {
        let available = self.account(addr)?.balance;
        if available < needed {
            return Err(LedgerError::InsufficientFunds { needed, available });
        }
        Ok(())
    }

    fn require_escrow(&self, addr: Address, needed: Gwei) -> Result<(), LedgerError> {
        let available = self.account(addr)?.escrow;
        if available < needed {
            return Err(LedgerError::InsufficientEscrow { needed, available });
        }
        Ok(())
    }

    fn acct(&mut self, addr: Address) -> &mut Account {
        self.accounts.get_mut(&addr).expect("account checked")
    }

    pub fn transfer(&mut self, from: Address, to: Address, amount: Gwei) -> Result<Receipt, LedgerError> {
        self.account(to)?;
        self.require_balance(from, amount)?;
        self.acct(from).balance -= amount;
        self.acct(to).balance += amount;
        Ok(Receipt { amount })
    }

    /// Moves `amount` from the account's balance into its escrow.
    pub fn escrow_lock(&mut self, addr: Address, amount: Gwei) -> Result<Receipt, LedgerError> {
        self.require_balance(addr, amount)?;
        let a = self.acct(addr);
        a.balance -= amount;
        a.escrow += amount;
        Ok(Receipt { amount })
    }

    /// Pays `amount` out of `addr`'s escrow into `to`'s balance.
    pub fn escrow_release(&mut self, addr: Address, amount: Gwei, to: Address) -> Result<Receipt, LedgerError> {
        self.account(to)?;
        self.require_escrow(addr, amount)?;
        self.acct(addr).escrow -= amount;
        self.acct(to).balance += amount;
        Ok(Receipt { amount })
    }

    /// Moves escrowed funds from one account's escrow into another's.
    pub fn escrow_move(&mut self, from: Address, to: Address, amount: Gwei) -> Result<Receipt, LedgerError> {
        self.account(to)?;
        self.require_escrow(from, amount)?;
        self.acct(from).escrow -= amount;
        self.acct(to).escrow += amount;
        Ok(Receipt { amount })
    }

    /// Gas fee `op` would cost at `gas_price`, without charging it.
    pub fn quote(&self, op: &str, gas_price: f64) -> Result<Gwei, LedgerError> {
        let gas = self
            .gas_table
            .get(op)
            .ok_or_else(|| LedgerError::UnknownOp(op.to_string()))?;
        Ok(fee_for(gas, gas_price))
    }

    /// Charges the gas fee for `op` into the fee sink and appends the
    /// transaction to the open block.
    pub fn submit(
        &mut self,
        caller: Address,
        op: &str,
        payload: &[u8],
        gas_price: f64,
    ) -> Result<Transaction, LedgerError> {
        let gas_used = self
            .gas_table
            .get(op)
            .ok_or_else(|| LedgerError::UnknownOp(op.to_string()))?;
        let fee = fee_for(gas_used, gas_price);
        let available = self.account(caller)?.balance;
        if available < fee {
            return Err(LedgerError::InsufficientGas { fee, available });
        }
        self.acct(caller).balance -= fee;
        let sink = self.fee_sink;
        self.acct(sink).balance += fee;
        let tx = Transaction {
            caller,
            op_name: op.to_string(),
            payload_digest: Digest::of(payload),
            gas_used,
            fee,
            block_height: self.blocks.len() as u64,
        };
        self.pending.push(tx.clone());
        Ok(tx)
    }

    pub fn pending(&self) -> &[Transaction] {
        &self.pending
    }

    /// Seals the open block (possibly empty) onto the chain.
    pub fn seal_block(&mut self) -> &Block {
        let height = self.blocks.len() as u64;
        let parent = self.blocks.last().expect("genesis present").digest;
        let transactions = std::mem::take(&mut self.pending);
        let digest = Block::compute_digest(height, &parent, &transactions);
        self.blocks.push(Block {
            height,
            parent_digest: parent,
            transactions,
            digest,
        });
        self.blocks.last().unwrap()
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    /// Raw access to sealed blocks, for integrity testing.
    pub fn blocks_mut(&mut self) -> &mut [Block] {
        &mut self.blocks
    }

    pub fn chain_verify(&self) -> bool {
        let genesis_ok = self
            .blocks
            .first()
            .is_some_and(|g| g.height == 0 && g.parent_digest == Digest::ZERO);
        genesis_ok
            && self.blocks.iter().enumerate().all(|(i, b)| {
                b.height == i as u64
                    && b.verify_digest()
                    && (i == 0 || b.parent_digest == self.blocks[i - 1].digest)
                    && b.transactions.iter().all(|tx| tx.block_height == b.height)
            })
    }

    pub fn content_put(&mut self, bytes: &[u8]) -> Digest {
        self.store.put(bytes)
    }

    pub fn content_get(&self, digest: &Digest) -> Result<&[u8], LedgerError> {
        self.store.get(digest).ok_or(LedgerError::NotFound(*digest))
    }

    pub fn content_store(&self) -> &ContentStore {
        &self.store
    }

    /// Sum of every gas fee ever charged.
    pub fn fees_collected(&self) -> Gwei {
        self.balance(self.fee_sink)
    }

    /// Line-oriented text dump:
    ///
    /// ```text
    /// ledger-snapshot v1
    /// fee_sink <address-hex>
    /// account <address-hex> <balance> <escrow>
    /// content <digest-hex> <byte-length>
    /// block <height> parent <digest-hex> digest <digest-hex> txs <count>
    /// tx <caller-hex> <op> <gas_used> <fee> <payload-digest-hex>
    /// pending <count>
    /// ```
    pub fn snapshot(&self) -> String {
        let mut out = String::from("ledger-snapshot v1\n");
        writeln!(out, "fee_sink {}", self.fee_sink.to_hex()).unwrap();
        for a in self.accounts.values() {
            writeln!(out, "account {} {} {}", a.address.to_hex(), a.balance, a.escrow).unwrap();
        }
        for (d, bytes) in self.store.iter() {
            writeln!(out, "content {} {}", d.to_hex(), bytes.len()).unwrap();
        }
        for b in &self.blocks {
            writeln!(
                out,
                "block {} parent {} digest {} txs {}",
                b.height,
                b.parent_digest.to_hex(),
                b.digest.to_hex(),
                b.transactions.len()
            )
            .unwrap();
            for tx in &b.transactions {
                writeln!(
                    out,
                    "tx {} {} {} {} {}",
                    tx.caller.to_hex(),
                    tx.op_name,
                    tx.gas_used,
                    tx.fee,
                    tx.payload_digest.to_hex()
                )
                .unwrap();
            }
        }
        writeln!(out, "pending {}", self.pending.len()).unwrap();
        out
    }
}
