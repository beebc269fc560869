//! UTXO chain model: transactions, blocks, validation and fee accounting.
//!
//! Blocks are appended by explicit [`Chain::mine_block`] calls with a
//! caller-chosen miner; there is no hashing race, fork choice or reorg.

mod amount;
mod chain;
mod keys;
pub mod store;
mod transaction;
mod wallet;

use thiserror::Error;

use crate::codec::TxId;

pub use amount::{Amount, AmountParseError, COIN};
pub use chain::{Allocation, Block, BlockHash, Chain, ChainConfig, Coin, PendingView, TxLocation, UtxoView};
pub use keys::{verify, KeyPair, PublicKeyId};
pub use transaction::{InputSignature, OutPoint, OutputLock, Transaction, TxIn, TxOut};
pub use wallet::{OwnedOutput, Wallet};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("missing utxo {0}")]
    MissingUtxo(OutPoint),
    #[error("double spend of {0}")]
    DoubleSpend(OutPoint),
    #[error("bad signature on input {input}: {reason}")]
    BadSignature { input: usize, reason: String },
    #[error("input {input} has only one of the two required signatures")]
    MissingCosignature { input: usize },
    #[error("outputs ({outputs}) exceed inputs ({inputs})")]
    ValueOverflow { inputs: Amount, outputs: Amount },
    #[error("key {key} cannot sign input {input}")]
    WrongKey { input: usize, key: PublicKeyId },
    #[error("no input at index {0}")]
    InputIndex(usize),
    #[error("transaction has no inputs")]
    NoInputs,
    #[error("coinbase transaction outside coinbase position")]
    UnexpectedCoinbase,
    #[error("amount arithmetic overflow")]
    AmountOverflow,
    #[error("transaction {txid} conflicts with chain or pending set: {source}")]
    Conflict {
        txid: TxId,
        #[source]
        source: Box<LedgerError>,
    },
    #[error("invalid block: {0}")]
    InvalidBlock(String),
    #[error("insufficient funds: need {needed}, have {available}")]
    InsufficientFunds { needed: Amount, available: Amount },
    #[error("unknown key {0:?}")]
    UnknownKey(String),
}
