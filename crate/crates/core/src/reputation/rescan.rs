use std::collections::HashMap;

use crate::codec::TxId;
use crate::ledger::{Amount, Chain, OutPoint, OutputLock, Transaction};
use crate::protocol::PaymentTx;

use super::index::{OpenFunding, OpenPayment, ReputationIndex};
use super::{ReputationEvent, ScoringMode};

struct Located<'a> {
    tx: &'a Transaction,
    txid: TxId,
    height: u64,
}

/// Rebuilds the index from genesis in one pass over the whole chain.
///
/// Unlike [`ReputationIndex::index_block`], which streams blocks and keeps
/// open payments and fundings as it goes, this walks the spender graph from
/// each payment forward (payment → funding → voucher).
pub fn full_rescan(chain: &Chain, mode: ScoringMode) -> ReputationIndex {
    let mut txs: Vec<Located> = Vec::new();
    let mut spender: HashMap<OutPoint, usize> = HashMap::new();
    for block in chain.blocks() {
        for tx in &block.transactions {
            let at = txs.len();
            for input in &tx.inputs {
                spender.insert(input.prevout, at);
            }
            txs.push(Located { tx, txid: tx.txid(), height: block.height });
        }
    }

    let mut index = ReputationIndex::new(mode);
    // (voucher position, payment, fee)
    let mut votes: Vec<(usize, OpenPayment, Amount)> = Vec::new();
    for located in &txs {
        let Ok(parsed) = PaymentTx::parse(located.tx) else {
            continue;
        };
        let payment = OpenPayment {
            payment_txid: located.txid,
            service: parsed.marker,
            producer: parsed.producer,
            voter: parsed.consumer,
        };
        index.services.entry(payment.service).or_default();
        index
            .producers
            .entry(payment.producer)
            .or_default()
            .entry(payment.service)
            .or_default();

        let price_out = OutPoint::new(located.txid, 0);
        let Some(&f) = spender.get(&price_out) else {
            index.open_payments.insert(price_out, payment);
            continue;
        };
        let funding = &txs[f];
        let escrow = match (funding.tx.inputs.len(), funding.tx.outputs.first()) {
            (1, Some(out)) if matches!(out.lock, OutputLock::PayToMultisig2of2(..)) => out.amount,
            _ => continue,
        };
        let escrow_out = OutPoint::new(funding.txid, 0);
        let Some(&v) = spender.get(&escrow_out) else {
            index.open_fundings.insert(escrow_out, OpenFunding { payment, escrow });
            continue;
        };
        let voucher = txs[v].tx;
        if voucher.inputs.len() != 1 {
            continue;
        }
        let marker = OutputLock::Marker(payment.service.payload);
        let tagged = voucher.outputs.iter().any(|o| o.lock == marker && o.amount.is_zero());
        let paid_out: Option<u64> = voucher
            .outputs
            .iter()
            .try_fold(0u64, |acc, o| acc.checked_add(o.amount.base_units()));
        match paid_out {
            Some(out) if tagged && out < escrow.base_units() => {
                votes.push((v, payment, Amount::from_base_units(escrow.base_units() - out)));
            }
            _ => {}
        }
    }

    votes.sort_by_key(|(v, _, _)| *v);
    let mut rest = votes.as_slice();
    while let Some(&(first, _, _)) = rest.first() {
        let height = txs[first].height;
        let split = rest.iter().position(|(v, _, _)| txs[*v].height != height).unwrap_or(rest.len());
        let (same_block, tail) = rest.split_at(split);
        let events: Vec<ReputationEvent> = same_block
            .iter()
            .map(|(v, p, fee)| ReputationEvent {
                service: p.service,
                producer: p.producer,
                voter: p.voter,
                vote_fee: *fee,
                contribution: mode.contribution(index.voter_score(&p.voter), *fee),
                height,
                payment_txid: p.payment_txid,
                voucher_txid: txs[*v].txid,
            })
            .collect();
        for event in events {
            index.record(event);
        }
        rest = tail;
    }
    index.next_height = chain.height() + 1;
    index
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::{ChainConfig, KeyPair};

    #[test]
    fn empty_chain_scores_nothing() {
        let chain = Chain::new(ChainConfig::default());
        let index = full_rescan(&chain, ScoringMode::Unweighted);
        assert!(index.events().is_empty());
        assert_eq!(index.indexed_through(), Some(0));
        assert_eq!(index.ranking(), vec![]);
        let mut incremental = ReputationIndex::new(ScoringMode::Unweighted);
        incremental.sync(&chain).unwrap();
        assert_eq!(incremental, index);
    }

    #[test]
    fn deterministic() {
        let a = KeyPair::from_label("a");
        let mut chain = Chain::new(ChainConfig::default().with_allocation(a.id(), Amount::from_coins(1)));
        chain.mine_block(&[], a.id()).unwrap();
        assert_eq!(full_rescan(&chain, ScoringMode::Unweighted), full_rescan(&chain, ScoringMode::Unweighted));
    }
}
