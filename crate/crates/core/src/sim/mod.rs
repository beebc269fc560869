//! Deterministic multi-agent market simulation on top of the ledger.
//!
//! Each block: purchases are drawn in fixed agent order, attackers self-deal,
//! the block is mined, then every payment mined in it gets an offer. Co-signed
//! vouchers go into the next block. One seeded generator drives every draw.

mod report;
mod runner;
mod scenario;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ledger::{Amount, PublicKeyId};

pub use report::{attack_report, write_metrics_csv, write_outputs, AttackRow};
pub use runner::{run, SimResult};
pub use scenario::{AttackerSpec, ConsumerSpec, CosignPolicy, ProducerSpec, ProtocolSpec, Scenario};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    /// A step the runner built itself was rejected.
    #[error("simulation failed: {0}")]
    Internal(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentRole {
    Producer,
    Consumer,
    Attacker,
    Miner,
}

impl AgentRole {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentRole::Producer => "producer",
            AgentRole::Consumer => "consumer",
            AgentRole::Attacker => "attacker",
            AgentRole::Miner => "miner",
        }
    }
}

/// Per-agent counters. Amounts are counted once the relevant transaction is mined.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentMetrics {
    pub name: String,
    pub role: AgentRole,
    pub main: PublicKeyId,
    pub purchases: u64,
    pub skipped_purchases: u64,
    pub sales: u64,
    pub offers_sent: u64,
    /// Offers not built because the vote fee fell under the minimum or the
    /// incentive did not fit.
    pub offers_failed: u64,
    pub cosigned: u64,
    pub declined: u64,
    pub spent_on_purchases: Amount,
    pub sales_revenue: Amount,
    pub miner_fees_paid: Amount,
    /// Confirmed vote fees.
    pub vote_fees_paid: Amount,
    /// Vote fees in co-signed vouchers, confirmed or not.
    pub vote_fees_offered: Amount,
    pub incentives_paid: Amount,
    pub incentives_received: Amount,
    pub mining_rewards: Amount,
    /// Under the scenario's mode.
    pub reputation: Amount,
    pub reputation_unweighted: Amount,
    /// Unweighted score from votes cast by the agent's own keys.
    pub self_financed_reputation: Amount,
    /// Vouchers co-signed after the last block, never mined.
    pub unconfirmed_vouchers: u64,
}

impl AgentMetrics {
    pub fn new(name: &str, role: AgentRole, main: PublicKeyId) -> Self {
        AgentMetrics {
            name: name.to_string(),
            role,
            main,
            purchases: 0,
            skipped_purchases: 0,
            sales: 0,
            offers_sent: 0,
            offers_failed: 0,
            cosigned: 0,
            declined: 0,
            spent_on_purchases: Amount::ZERO,
            sales_revenue: Amount::ZERO,
            miner_fees_paid: Amount::ZERO,
            vote_fees_paid: Amount::ZERO,
            vote_fees_offered: Amount::ZERO,
            incentives_paid: Amount::ZERO,
            incentives_received: Amount::ZERO,
            mining_rewards: Amount::ZERO,
            reputation: Amount::ZERO,
            reputation_unweighted: Amount::ZERO,
            self_financed_reputation: Amount::ZERO,
            unconfirmed_vouchers: 0,
        }
    }

    /// More than half the unweighted score came from the agent's own keys.
    pub fn mostly_self_financed(&self) -> bool {
        !self.reputation_unweighted.is_zero()
            && self.self_financed_reputation.base_units() as u128 * 2 > self.reputation_unweighted.base_units() as u128
    }
}
