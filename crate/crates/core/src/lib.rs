//! Voucher-based reputation on a UTXO ledger.
//!
//! A consumer pays a producer with a three-output payment whose middle output
//! sends zero coins to a service marker address derived from the service URL.
//! The producer then offers a voucher spending a 2-of-2 output: once the
//! consumer co-signs, the voucher pays an optional incentive back to the
//! consumer and leaves a vote fee unassigned for the miner. An indexer walks
//! the chain and sums those vote fees per service and per producer.

pub mod codec;
pub mod ledger;
pub mod protocol;
pub mod reputation;
pub mod sim;
pub mod cli;
