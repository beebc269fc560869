use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codec;
use crate::ledger::Amount;
use crate::protocol::{FeePolicy, Rate};
use crate::reputation::ScoringMode;

use super::SimError;

/// What a consumer does with an offer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CosignPolicy {
    /// Co-sign only when the delivery succeeded.
    #[default]
    CosignIfSatisfied,
    /// Take the incentive regardless of the outcome.
    AlwaysCosign,
    NeverCosign,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProducerSpec {
    pub name: String,
    pub service: String,
    pub price: Amount,
    pub delivery_success: f64,
    /// Producers may also buy from other producers.
    #[serde(default)]
    pub funds: Amount,
    #[serde(default)]
    pub purchase_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsumerSpec {
    pub name: String,
    pub funds: Amount,
    pub purchase_rate: f64,
    #[serde(default)]
    pub policy: CosignPolicy,
}

/// A producer buying its own service through fresh identities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackerSpec {
    pub name: String,
    pub service: String,
    pub price: Amount,
    pub budget: Amount,
    pub identities: u32,
    pub deals_per_block: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolSpec {
    pub rate: Rate,
    pub incentive: Amount,
    #[serde(default)]
    pub payment_fee: Amount,
    #[serde(default)]
    pub funding_fee: Amount,
    #[serde(default = "default_min_vote_fee")]
    pub min_vote_fee: Option<Amount>,
}

fn default_min_vote_fee() -> Option<Amount> {
    FeePolicy::default().minimum
}

impl Default for ProtocolSpec {
    fn default() -> Self {
        ProtocolSpec {
            rate: Rate::percent(3).expect("valid rate"),
            incentive: Amount::from_base_units(1_000_000),
            payment_fee: Amount::ZERO,
            funding_fee: Amount::ZERO,
            min_vote_fee: default_min_vote_fee(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub seed: u64,
    /// Blocks with trading.
    pub blocks: u64,
    /// Extra blocks after trading stops, mining only the vouchers still queued.
    #[serde(default)]
    pub settle_blocks: u64,
    #[serde(default = "default_subsidy")]
    pub subsidy: Amount,
    /// Mining rotates through these names. A name matching an agent mines
    /// to that agent's main key.
    pub miners: Vec<String>,
    #[serde(default)]
    pub producers: Vec<ProducerSpec>,
    #[serde(default)]
    pub consumers: Vec<ConsumerSpec>,
    #[serde(default)]
    pub attackers: Vec<AttackerSpec>,
    #[serde(default)]
    pub protocol: ProtocolSpec,
    #[serde(default)]
    pub mode: ScoringMode,
}

fn default_subsidy() -> Amount {
    Amount::from_coins(50)
}

impl Scenario {
    /// Reads a TOML or JSON scenario, chosen by file extension.
    pub fn load(path: &Path) -> Result<Scenario, SimError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::InvalidScenario(format!("{}: {e}", path.display())))?;
        let scenario: Scenario = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text).map_err(|e| SimError::InvalidScenario(e.to_string()))?,
            _ => toml::from_str(&text).map_err(|e| SimError::InvalidScenario(e.to_string()))?,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::InvalidScenario(msg));
        if self.miners.is_empty() {
            return bad("at least one miner is required".into());
        }
        let mut names = BTreeSet::new();
        let agent_names = self
            .producers
            .iter()
            .map(|p| &p.name)
            .chain(self.consumers.iter().map(|c| &c.name))
            .chain(self.attackers.iter().map(|a| &a.name));
        for name in agent_names {
            if name.is_empty() || !names.insert(name.clone()) {
                return bad(format!("agent names must be unique and non-empty: {name:?}"));
            }
        }
        let prob_ok = |p: f64| (0.0..=1.0).contains(&p);
        for p in &self.producers {
            if !prob_ok(p.delivery_success) || !prob_ok(p.purchase_rate) {
                return bad(format!("{}: probabilities must lie in [0, 1]", p.name));
            }
            if codec::derive_service_address(&p.service).is_err() {
                return bad(format!("{}: empty service url", p.name));
            }
        }
        for c in &self.consumers {
            if !prob_ok(c.purchase_rate) {
                return bad(format!("{}: purchase rate must lie in [0, 1]", c.name));
            }
        }
        for a in &self.attackers {
            if a.identities == 0 {
                return bad(format!("{}: attacker needs at least one identity", a.name));
            }
            if codec::derive_service_address(&a.service).is_err() {
                return bad(format!("{}: empty service url", a.name));
            }
        }
        if let ScoringMode::Weighted { c } = self.mode {
            if c.is_zero() {
                return bad("weighting constant must be > 0".into());
            }
        }
        Ok(())
    }

    pub fn fee_policy(&self) -> FeePolicy {
        FeePolicy { minimum: self.protocol.min_vote_fee }
    }
}
