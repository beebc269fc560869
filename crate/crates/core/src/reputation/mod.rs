//! Chain-traversing reputation indexer.
//!
//! A counted vote is a payment → funding → voucher chain:
//!
//! * payment: three outputs, the second a zero-valued service marker;
//! * funding: the single-input transaction spending the payment's price
//!   output, whose output 0 is a 2-of-2 lock;
//! * voucher: the single-input transaction spending that 2-of-2 output,
//!   sending zero to the same marker and leaving a positive fee.
//!
//! The voucher's fee is the vote. [`ReputationIndex::index_block`] follows the
//! chain block by block; [`full_rescan`] rebuilds the same index from the
//! whole chain through a different route and is used to cross-check it.

mod index;
mod report;
mod rescan;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{Address, TxId};
use crate::ledger::{Amount, PublicKeyId};

pub use index::{ProducerReputation, ReputationIndex, ServiceStats};
pub use report::{report_rows, write_csv, write_json, ReportRow, UrlRegistry};
pub use rescan::full_rescan;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReputationError {
    #[error("out-of-order block: expected height {expected}, got {got}")]
    OutOfOrder { expected: u64, got: u64 },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScoringMode {
    /// Score is the plain sum of vote fees.
    #[default]
    Unweighted,
    /// Each vote counts `floor(w × fee)` with `w = r / (r + c)`, `r` being
    /// the voter's own unweighted producer score before the block.
    Weighted { c: Amount },
}

impl ScoringMode {
    pub fn weighted(c: Amount) -> Result<ScoringMode, ReputationError> {
        if c.is_zero() {
            return Err(ReputationError::InvalidConfig("weighting constant must be > 0".into()));
        }
        Ok(ScoringMode::Weighted { c })
    }

    /// Score contributed by a vote of `fee` from a voter with score `voter`.
    pub fn contribution(&self, voter: Amount, fee: Amount) -> Amount {
        match *self {
            ScoringMode::Unweighted => fee,
            ScoringMode::Weighted { c } => Weight::new(voter, c).apply(fee),
        }
    }
}

/// The exact fraction `r / (r + c)`.
#[derive(Debug, Clone, Copy)]
pub struct Weight {
    r: u128,
    c: u128,
}

impl Weight {
    fn new(r: Amount, c: Amount) -> Weight {
        Weight { r: r.base_units() as u128, c: c.base_units() as u128 }
    }

    /// floor(w × fee).
    pub fn apply(&self, fee: Amount) -> Amount {
        Amount::from_base_units((self.r * fee.base_units() as u128 / (self.r + self.c)) as u64)
    }

    pub fn is_below_one(&self) -> bool {
        self.c > 0
    }

    pub fn as_f64(&self) -> f64 {
        self.r as f64 / (self.r + self.c) as f64
    }
}

// r1/(r1+c1) < r2/(r2+c2)  ⇔  r1·c2 < r2·c1
impl PartialEq for Weight {
    fn eq(&self, other: &Self) -> bool {
        self.r * other.c == other.r * self.c
    }
}

impl PartialOrd for Weight {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        (self.r * other.c).partial_cmp(&(other.r * self.c))
    }
}

/// `w = r / (r + c)`, in [0, 1) for c > 0.
pub fn weight(r: Amount, c: Amount) -> Result<Weight, ReputationError> {
    if c.is_zero() {
        return Err(ReputationError::InvalidConfig("weighting constant must be > 0".into()));
    }
    Ok(Weight::new(r, c))
}

/// One counted voucher.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReputationEvent {
    pub service: Address,
    pub producer: PublicKeyId,
    pub voter: PublicKeyId,
    pub vote_fee: Amount,
    /// Score added under the index's mode.
    pub contribution: Amount,
    pub height: u64,
    pub payment_txid: TxId,
    pub voucher_txid: TxId,
}
