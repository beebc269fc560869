use std::collections::{BTreeMap, HashMap};

use crate::codec::{self, Address, TxId};
use crate::ledger::{Amount, Block, Chain, OutPoint, OutputLock, PublicKeyId, Transaction};
use crate::protocol::PaymentTx;

use super::{ReputationError, ReputationEvent, ScoringMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ServiceStats {
    /// Score under the index's mode.
    pub score: Amount,
    /// Plain sum of counted vote fees.
    pub vote_fees: Amount,
    pub events: usize,
    pub last_height: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProducerReputation {
    pub total: Amount,
    /// Every service the producer has been paid for, voted or not.
    pub breakdown: Vec<(Address, Amount)>,
}

/// A payment whose price output has not been spent yet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct OpenPayment {
    pub payment_txid: TxId,
    pub service: Address,
    pub producer: PublicKeyId,
    pub voter: PublicKeyId,
}

/// A funding whose 2-of-2 output has not been spent yet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct OpenFunding {
    pub payment: OpenPayment,
    pub escrow: Amount,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReputationIndex {
    pub(crate) mode: ScoringMode,
    pub(crate) next_height: u64,
    pub(crate) events: Vec<ReputationEvent>,
    pub(crate) services: BTreeMap<Address, ServiceStats>,
    pub(crate) producers: BTreeMap<PublicKeyId, BTreeMap<Address, Amount>>,
    /// Unweighted producer scores; voter weights are read from here.
    pub(crate) base_scores: BTreeMap<PublicKeyId, Amount>,
    pub(crate) open_payments: HashMap<OutPoint, OpenPayment>,
    pub(crate) open_fundings: HashMap<OutPoint, OpenFunding>,
}

/// Fee of `tx` if it is a voucher for `funding`.
pub(crate) fn voucher_fee(tx: &Transaction, funding: &OpenFunding) -> Option<Amount> {
    if tx.inputs.len() != 1 {
        return None;
    }
    let marker = OutputLock::marker(&funding.payment.service);
    if !tx.outputs.iter().any(|o| o.lock == marker && o.amount.is_zero()) {
        return None;
    }
    let fee = funding.escrow.checked_sub(tx.output_total()?)?;
    (!fee.is_zero()).then_some(fee)
}

/// Escrow amount if `tx` is a funding for a payment's price output.
pub(crate) fn funding_escrow(tx: &Transaction) -> Option<Amount> {
    match tx.outputs.first() {
        Some(out) if tx.inputs.len() == 1 && matches!(out.lock, OutputLock::PayToMultisig2of2(..)) => Some(out.amount),
        _ => None,
    }
}

impl ReputationIndex {
    pub fn new(mode: ScoringMode) -> Self {
        ReputationIndex {
            mode,
            next_height: 0,
            events: Vec::new(),
            services: BTreeMap::new(),
            producers: BTreeMap::new(),
            base_scores: BTreeMap::new(),
            open_payments: HashMap::new(),
            open_fundings: HashMap::new(),
        }
    }

    pub fn mode(&self) -> ScoringMode {
        self.mode
    }

    /// Highest indexed block, or `None` before genesis.
    pub fn indexed_through(&self) -> Option<u64> {
        self.next_height.checked_sub(1)
    }

    pub fn events(&self) -> &[ReputationEvent] {
        &self.events
    }

    pub fn services(&self) -> impl Iterator<Item = (&Address, &ServiceStats)> {
        self.services.iter()
    }

    pub fn index_block(&mut self, block: &Block) -> Result<(), ReputationError> {
        if block.height != self.next_height {
            return Err(ReputationError::OutOfOrder { expected: self.next_height, got: block.height });
        }
        let mut votes: Vec<(OpenPayment, Amount, TxId)> = Vec::new();
        for tx in &block.transactions {
            let txid = tx.txid();
            for input in &tx.inputs {
                if let Some(payment) = self.open_payments.remove(&input.prevout) {
                    if let Some(escrow) = funding_escrow(tx) {
                        self.open_fundings.insert(OutPoint::new(txid, 0), OpenFunding { payment, escrow });
                    }
                }
                if let Some(funding) = self.open_fundings.remove(&input.prevout) {
                    if let Some(fee) = voucher_fee(tx, &funding) {
                        votes.push((funding.payment, fee, txid));
                    }
                }
            }
            if let Ok(payment) = PaymentTx::parse(tx) {
                self.open_payments.insert(
                    OutPoint::new(txid, 0),
                    OpenPayment {
                        payment_txid: txid,
                        service: payment.marker,
                        producer: payment.producer,
                        voter: payment.consumer,
                    },
                );
                self.services.entry(payment.marker).or_default();
                self.producers
                    .entry(payment.producer)
                    .or_default()
                    .entry(payment.marker)
                    .or_default();
            }
        }

        // weights read scores as of the previous block
        let events: Vec<ReputationEvent> = votes
            .into_iter()
            .map(|(p, fee, voucher_txid)| {
                let voter_score = self.base_scores.get(&p.voter).copied().unwrap_or_default();
                ReputationEvent {
                    service: p.service,
                    producer: p.producer,
                    voter: p.voter,
                    vote_fee: fee,
                    contribution: self.mode.contribution(voter_score, fee),
                    height: block.height,
                    payment_txid: p.payment_txid,
                    voucher_txid,
                }
            })
            .collect();
        for event in events {
            self.record(event);
        }
        self.next_height += 1;
        Ok(())
    }

    pub(crate) fn record(&mut self, event: ReputationEvent) {
        let add = |a: &mut Amount, b: Amount| *a = a.checked_add(b).expect("score overflow");
        let stats = self.services.entry(event.service).or_default();
        add(&mut stats.score, event.contribution);
        add(&mut stats.vote_fees, event.vote_fee);
        stats.events += 1;
        stats.last_height = Some(event.height);
        add(
            self.producers.entry(event.producer).or_default().entry(event.service).or_default(),
            event.contribution,
        );
        add(self.base_scores.entry(event.producer).or_default(), event.vote_fee);
        self.events.push(event);
    }

    /// Indexes every chain block above the current height.
    pub fn sync(&mut self, chain: &Chain) -> Result<(), ReputationError> {
        for block in &chain.blocks()[self.next_height as usize..] {
            self.index_block(block)?;
        }
        Ok(())
    }

    pub fn reputation_of_service(&self, service: &Address) -> Amount {
        self.services.get(service).map(|s| s.score).unwrap_or_default()
    }

    pub fn reputation_of_url(&self, url: &str) -> Amount {
        codec::derive_service_address(url)
            .map(|m| self.reputation_of_service(&m))
            .unwrap_or_default()
    }

    pub fn service_stats(&self, service: &Address) -> ServiceStats {
        self.services.get(service).copied().unwrap_or_default()
    }

    pub fn reputation_of_producer(&self, producer: &PublicKeyId) -> ProducerReputation {
        let breakdown: Vec<(Address, Amount)> = self
            .producers
            .get(producer)
            .map(|m| m.iter().map(|(a, s)| (*a, *s)).collect())
            .unwrap_or_default();
        ProducerReputation {
            total: breakdown.iter().map(|(_, s)| *s).sum(),
            breakdown,
        }
    }

    /// Score a voter carries into weighting: its own unweighted producer score.
    pub fn voter_score(&self, voter: &PublicKeyId) -> Amount {
        self.base_scores.get(voter).copied().unwrap_or_default()
    }

    /// Producers sorted by score, highest first; ties by id.
    pub fn ranking(&self) -> Vec<(PublicKeyId, Amount)> {
        let mut ranked: Vec<(PublicKeyId, Amount)> = self
            .producers
            .keys()
            .map(|p| (*p, self.reputation_of_producer(p).total))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        ranked
    }
}
