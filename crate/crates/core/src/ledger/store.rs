//! Line-delimited JSON chain store and transaction files.
//!
//! A chain file holds one block per line:
//!
//! ```text
//! {"height":1,"prev":"<hex>","subsidy":5000000000,"coinbase":{...},"transactions":[{...}]}
//! ```
//!
//! Each transaction object carries its `txid` (hex) next to `inputs`,
//! `outputs`, `is_coinbase` and `lock_height`. Inputs list `prevout`
//! (`txid`, `vout`) and `signatures` (`public_key`, `signature`, hex).
//! Files are only ever appended to.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::TxId;

use super::{Amount, Block, BlockHash, Chain, LedgerError, Transaction};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: stored txid {stored} does not match computed {computed}")]
    TxidMismatch { line: usize, stored: TxId, computed: TxId },
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.display().to_string(), source }
}

/// A transaction with its txid, as written to files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TxRecord {
    pub txid: TxId,
    #[serde(flatten)]
    pub tx: Transaction,
}

impl TxRecord {
    pub fn new(tx: Transaction) -> Self {
        TxRecord { txid: tx.txid(), tx }
    }

    fn into_checked(self, line: usize) -> Result<Transaction, StoreError> {
        let computed = self.tx.txid();
        if computed != self.txid {
            return Err(StoreError::TxidMismatch { line, stored: self.txid, computed });
        }
        Ok(self.tx)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BlockRecord {
    height: u64,
    prev: BlockHash,
    subsidy: Amount,
    coinbase: TxRecord,
    transactions: Vec<TxRecord>,
}

pub fn block_to_line(block: &Block) -> String {
    let record = BlockRecord {
        height: block.height,
        prev: block.prev,
        subsidy: block.subsidy,
        coinbase: TxRecord::new(block.coinbase.clone()),
        transactions: block.transactions.iter().cloned().map(TxRecord::new).collect(),
    };
    serde_json::to_string(&record).expect("block serializes")
}

pub fn block_from_line(text: &str, line: usize) -> Result<Block, StoreError> {
    let record: BlockRecord = serde_json::from_str(text)
        .map_err(|e| StoreError::Parse { line, message: e.to_string() })?;
    Ok(Block {
        height: record.height,
        prev: record.prev,
        subsidy: record.subsidy,
        coinbase: record.coinbase.into_checked(line)?,
        transactions: record
            .transactions
            .into_iter()
            .map(|r| r.into_checked(line))
            .collect::<Result<_, _>>()?,
    })
}

/// Serializes the whole chain, one block per line.
pub fn chain_to_string(chain: &Chain) -> String {
    let mut out = String::new();
    for block in chain.blocks() {
        out.push_str(&block_to_line(block));
        out.push('\n');
    }
    out
}

pub fn chain_from_str(text: &str) -> Result<Chain, StoreError> {
    let blocks = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| block_from_line(l, i + 1))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Chain::from_blocks(blocks)?)
}

pub fn read_chain(path: &Path) -> Result<Chain, StoreError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut blocks = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        blocks.push(block_from_line(&line, i + 1)?);
    }
    Ok(Chain::from_blocks(blocks)?)
}

/// Creates a new chain file. Fails if `path` already exists.
pub fn create_chain_file(path: &Path, chain: &Chain) -> Result<(), StoreError> {
    let mut file = OpenOptions::new()
        .write(true)
        .create_new(true)
        .open(path)
        .map_err(io_err(path))?;
    file.write_all(chain_to_string(chain).as_bytes()).map_err(io_err(path))
}

/// Appends blocks above `from_height` to an existing chain file.
pub fn append_blocks(path: &Path, chain: &Chain, from_height: u64) -> Result<(), StoreError> {
    let mut file = OpenOptions::new().append(true).open(path).map_err(io_err(path))?;
    let mut out = String::new();
    for block in &chain.blocks()[from_height as usize + 1..] {
        out.push_str(&block_to_line(block));
        out.push('\n');
    }
    file.write_all(out.as_bytes()).map_err(io_err(path))
}

/// A file holding one or more transactions, in submission order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TxFile {
    pub transactions: Vec<TxRecord>,
}

impl TxFile {
    pub fn new(txs: impl IntoIterator<Item = Transaction>) -> Self {
        TxFile { transactions: txs.into_iter().map(TxRecord::new).collect() }
    }

    pub fn into_transactions(self) -> Result<Vec<Transaction>, StoreError> {
        self.transactions
            .into_iter()
            .enumerate()
            .map(|(i, r)| r.into_checked(i + 1))
            .collect()
    }
}
