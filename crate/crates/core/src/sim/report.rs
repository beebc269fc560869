use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::ledger::{store, Amount};
use crate::reputation::{self, report_rows};

use super::{AgentMetrics, AgentRole, SimError, SimResult};

/// Cost of reputation for one selling agent.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackRow {
    pub agent: String,
    pub role: AgentRole,
    pub reputation: Amount,
    pub reputation_unweighted: Amount,
    /// Vote fees plus miner fees, gone to miners.
    pub fees_burned: Amount,
    /// Incentives paid minus incentives received, base units.
    pub incentives_net: i128,
    /// (fees burned + net incentives) per unit of reputation; `None` with no reputation.
    pub cost_per_reputation: Option<f64>,
    pub self_financed: bool,
}

fn attack_row(m: &AgentMetrics) -> AttackRow {
    let fees_burned = m.vote_fees_paid.checked_add(m.miner_fees_paid).expect("fee overflow");
    let incentives_net = m.incentives_paid.base_units() as i128 - m.incentives_received.base_units() as i128;
    let cost = fees_burned.base_units() as i128 + incentives_net;
    let cost_per_reputation =
        (!m.reputation.is_zero()).then(|| cost as f64 / m.reputation.base_units() as f64);
    AttackRow {
        agent: m.name.clone(),
        role: m.role,
        reputation: m.reputation,
        reputation_unweighted: m.reputation_unweighted,
        fees_burned,
        incentives_net,
        cost_per_reputation,
        self_financed: m.mostly_self_financed(),
    }
}

/// Rows for producers and attackers, in scenario order.
pub fn attack_report(result: &SimResult) -> Vec<AttackRow> {
    result
        .agents
        .iter()
        .filter(|m| matches!(m.role, AgentRole::Producer | AgentRole::Attacker))
        .map(attack_row)
        .collect()
}

const METRIC_COLUMNS: [&str; 23] = [
    "agent",
    "role",
    "address",
    "purchases",
    "skipped_purchases",
    "sales",
    "offers_sent",
    "offers_failed",
    "cosigned",
    "declined",
    "spent_on_purchases",
    "sales_revenue",
    "miner_fees_paid",
    "vote_fees_paid",
    "vote_fees_offered",
    "incentives_paid",
    "incentives_received",
    "mining_rewards",
    "reputation",
    "reputation_unweighted",
    "self_financed_reputation",
    "self_financed",
    "unconfirmed_vouchers",
];

/// One row per agent. Amounts in base units.
pub fn write_metrics_csv<W: Write>(agents: &[AgentMetrics], out: W) -> csv::Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(METRIC_COLUMNS)?;
    for m in agents {
        let units = |a: Amount| a.base_units().to_string();
        writer.write_record([
            m.name.clone(),
            m.role.as_str().to_string(),
            m.main.to_string(),
            m.purchases.to_string(),
            m.skipped_purchases.to_string(),
            m.sales.to_string(),
            m.offers_sent.to_string(),
            m.offers_failed.to_string(),
            m.cosigned.to_string(),
            m.declined.to_string(),
            units(m.spent_on_purchases),
            units(m.sales_revenue),
            units(m.miner_fees_paid),
            units(m.vote_fees_paid),
            units(m.vote_fees_offered),
            units(m.incentives_paid),
            units(m.incentives_received),
            units(m.mining_rewards),
            units(m.reputation),
            units(m.reputation_unweighted),
            units(m.self_financed_reputation),
            m.mostly_self_financed().to_string(),
            m.unconfirmed_vouchers.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> SimError {
    SimError::Io(std::io::Error::other(e))
}

/// Writes `chain.jsonl`, `reputation.csv`, `reputation.jsonl` and
/// `agents.csv` into `dir`, creating it if needed.
pub fn write_outputs(result: &SimResult, dir: &Path) -> Result<(), SimError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("chain.jsonl"), store::chain_to_string(&result.chain))?;
    let rows = report_rows(&result.index, &result.registry);
    let mut csv_out = Vec::new();
    reputation::write_csv(&rows, &mut csv_out).map_err(csv_err)?;
    fs::write(dir.join("reputation.csv"), csv_out)?;
    let mut json_out = Vec::new();
    reputation::write_json(&rows, &mut json_out)?;
    fs::write(dir.join("reputation.jsonl"), json_out)?;
    let mut metrics = Vec::new();
    write_metrics_csv(&result.agents, &mut metrics).map_err(csv_err)?;
    fs::write(dir.join("agents.csv"), metrics)?;
    Ok(())
}
