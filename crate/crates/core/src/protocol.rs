//! Payment and voucher construction plus the deal workflow.
//!
//! A payment has exactly three outputs in fixed order: the price to the
//! producer, zero coins to the service marker, and change to the consumer.
//! The producer answers with a [`VoucherOffer`]: a funding transaction that
//! moves `incentive + vote fee` out of the price output into a 2-of-2 output
//! held by (consumer, producer), and a producer-signed draft voucher spending
//! that output. The draft pays the incentive to the consumer, sends zero to the
//! same marker, and leaves exactly the vote fee unassigned. Only the
//! consumer's co-signature makes the draft valid.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{self, Address, CodecError, TxId};
use crate::ledger::store::TxRecord;
use crate::ledger::{
    Amount, Chain, KeyPair, LedgerError, OutPoint, OutputLock, PublicKeyId, Transaction, TxOut,
    Wallet,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("invalid service: {0}")]
    InvalidService(#[from] CodecError),
    #[error("insufficient funds: need {needed}, have {available}")]
    InsufficientFunds { needed: Amount, available: Amount },
    #[error("not a payment: {0}")]
    NotAPayment(String),
    #[error("payment {0} is not confirmed")]
    PaymentNotConfirmed(TxId),
    #[error("payment output {outpoint} already spent by {spender}")]
    Out1AlreadySpent { outpoint: OutPoint, spender: TxId },
    #[error("incentive {incentive} + vote fee {vote_fee} + funding fee {funding_fee} exceed price {price}")]
    IncentiveTooLarge {
        incentive: Amount,
        vote_fee: Amount,
        funding_fee: Amount,
        price: Amount,
    },
    #[error("rate must lie in (0, 1]: {0}")]
    InvalidRate(String),
    #[error("vote fee {fee} is below the minimum {minimum}")]
    VoteFeeBelowMinimum { fee: Amount, minimum: Amount },
    #[error("key {0} does not match this offer")]
    WrongKey(PublicKeyId),
    #[error("voucher already co-signed")]
    AlreadyCosigned,
    #[error("draft voucher lacks the producer signature")]
    MissingProducerSignature,
    #[error("malformed offer: {0}")]
    MalformedOffer(String),
    #[error("offer does not link to its payment: {0}")]
    LinkFailure(String),
    #[error("illegal transition: {event:?} from {from:?}")]
    IllegalTransition { from: DealState, event: DealEvent },
    #[error(transparent)]
    Ledger(LedgerError),
}

impl From<LedgerError> for ProtocolError {
    fn from(e: LedgerError) -> Self {
        match e {
            LedgerError::InsufficientFunds { needed, available } => {
                ProtocolError::InsufficientFunds { needed, available }
            }
            other => ProtocolError::Ledger(other),
        }
    }
}

/// A service S identified by its URL, with its marker address S*.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceDescriptor {
    pub url: String,
    pub marker: Address,
    /// Digest of the SLA document; carried as metadata only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sla: Option<String>,
}

impl ServiceDescriptor {
    pub fn new(url: &str) -> Result<Self, ProtocolError> {
        Ok(ServiceDescriptor {
            url: url.to_string(),
            marker: codec::derive_service_address(url)?,
            sla: None,
        })
    }

    pub fn with_sla(mut self, document: &[u8]) -> Self {
        self.sla = Some(hex::encode(codec::sha256(document)));
        self
    }

    pub fn is_consistent(&self) -> bool {
        codec::derive_service_address(&self.url) == Ok(self.marker)
    }
}

/// Fraction of the price turned into the vote fee, in (0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Rate {
    numer: u64,
    denom: u64,
}

impl Rate {
    pub fn new(numer: u64, denom: u64) -> Result<Rate, ProtocolError> {
        if denom == 0 || numer == 0 || numer > denom {
            return Err(ProtocolError::InvalidRate(format!("{numer}/{denom}")));
        }
        Ok(Rate { numer, denom })
    }

    pub fn percent(p: u64) -> Result<Rate, ProtocolError> {
        Rate::new(p, 100)
    }

    /// floor(rate × price).
    pub fn vote_fee(&self, price: Amount) -> Amount {
        let fee = price.base_units() as u128 * self.numer as u128 / self.denom as u128;
        Amount::from_base_units(fee as u64)
    }
}

impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.numer, self.denom)
    }
}

impl FromStr for Rate {
    type Err = ProtocolError;

    /// Accepts `3%`, `0.03` or `3/100`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let bad = || ProtocolError::InvalidRate(s.to_string());
        if let Some((n, d)) = s.split_once('/') {
            return Rate::new(n.trim().parse().map_err(|_| bad())?, d.trim().parse().map_err(|_| bad())?);
        }
        let (number, scale) = match s.strip_suffix('%') {
            Some(p) => (p.trim(), 100u64),
            None => (s, 1u64),
        };
        let (whole, frac) = number.split_once('.').unwrap_or((number, ""));
        if (whole.is_empty() && frac.is_empty())
            || !whole.bytes().all(|b| b.is_ascii_digit())
            || !frac.bytes().all(|b| b.is_ascii_digit())
            || frac.len() > 12
        {
            return Err(bad());
        }
        let pow = 10u64.pow(frac.len() as u32);
        let whole: u64 = if whole.is_empty() { 0 } else { whole.parse().map_err(|_| bad())? };
        let frac: u64 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| bad())? };
        let numer = whole.checked_mul(pow).and_then(|w| w.checked_add(frac)).ok_or_else(bad)?;
        let denom = pow.checked_mul(scale).ok_or_else(bad)?;
        let g = gcd(numer, denom).max(1);
        Rate::new(numer / g, denom / g)
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl TryFrom<String> for Rate {
    type Error = ProtocolError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Rate> for String {
    fn from(r: Rate) -> String {
        r.to_string()
    }
}

/// Minimum vote fee a voucher must carry. `None` waives the check and lets
/// zero-fee vouchers through (they are never scored).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeePolicy {
    pub minimum: Option<Amount>,
}

impl Default for FeePolicy {
    fn default() -> Self {
        FeePolicy { minimum: Some(Amount::from_base_units(1)) }
    }
}

impl FeePolicy {
    pub fn waived() -> Self {
        FeePolicy { minimum: None }
    }
}

/// A three-output payment: price to producer, zero to S*, change to consumer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PaymentTx {
    pub tx: Transaction,
    /// Signer of the first input.
    pub consumer: PublicKeyId,
    pub producer: PublicKeyId,
    pub marker: Address,
    pub price: Amount,
}

impl PaymentTx {
    /// Recognises the fixed payment layout.
    pub fn parse(tx: &Transaction) -> Result<PaymentTx, ProtocolError> {
        let reject = |msg: &str| Err(ProtocolError::NotAPayment(msg.to_string()));
        if tx.is_coinbase {
            return reject("coinbase");
        }
        if tx.outputs.len() != 3 {
            return reject("expected exactly three outputs");
        }
        let producer = match tx.outputs[0].lock {
            OutputLock::PayToKeyHash(p) => p,
            _ => return reject("first output must pay a key hash"),
        };
        let marker = match tx.outputs[1].lock {
            OutputLock::Marker(m) if tx.outputs[1].amount.is_zero() => Address::key_hash(m),
            _ => return reject("second output must send zero to a service marker"),
        };
        if !matches!(tx.outputs[2].lock, OutputLock::PayToKeyHash(_)) {
            return reject("third output must return change to a key hash");
        }
        let consumer = match tx.inputs.first().and_then(|i| i.signatures.first()) {
            Some(sig) => sig.signer(),
            None => return reject("first input is unsigned"),
        };
        Ok(PaymentTx {
            tx: tx.clone(),
            consumer,
            producer,
            marker,
            price: tx.outputs[0].amount,
        })
    }

    pub fn txid(&self) -> TxId {
        self.tx.txid()
    }

    /// The price output (Out1).
    pub fn price_outpoint(&self) -> OutPoint {
        self.tx.outpoint(0)
    }

    pub fn change(&self) -> Amount {
        self.tx.outputs[2].amount
    }
}

/// Builds and signs a payment from `payer`'s outputs in `wallet`.
pub fn build_payment(
    wallet: &Wallet,
    payer: &str,
    producer: PublicKeyId,
    service: &ServiceDescriptor,
    price: Amount,
    miner_fee: Amount,
) -> Result<PaymentTx, ProtocolError> {
    if !service.is_consistent() {
        return Err(ProtocolError::InvalidService(CodecError::Malformed(format!(
            "marker {} does not match url {:?}",
            service.marker, service.url
        ))));
    }
    let consumer = wallet.key(payer)?.id();
    let needed = price.checked_add(miner_fee).ok_or(LedgerError::AmountOverflow)?;
    let (inputs, total) = wallet.select(payer, needed)?;
    let change = total.checked_sub(needed).expect("selection covers target");
    let mut tx = Transaction::new(
        inputs.iter().map(|o| o.outpoint),
        vec![
            TxOut::new(price, OutputLock::PayToKeyHash(producer)),
            TxOut::new(Amount::ZERO, OutputLock::marker(&service.marker)),
            TxOut::new(change, OutputLock::PayToKeyHash(consumer)),
        ],
    );
    wallet.sign_owned_inputs(&mut tx, &inputs)?;
    Ok(PaymentTx { tx, consumer, producer, marker: service.marker, price })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OfferTerms {
    pub rate: Rate,
    pub incentive: Amount,
    pub funding_fee: Amount,
    pub fee_policy: FeePolicy,
}

impl OfferTerms {
    pub fn new(rate: Rate, incentive: Amount) -> Self {
        OfferTerms {
            rate,
            incentive,
            funding_fee: Amount::ZERO,
            fee_policy: FeePolicy::default(),
        }
    }
}

/// Producer-signed funding transaction and draft voucher awaiting the
/// consumer's co-signature.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoucherOffer {
    pub payment_txid: TxId,
    pub service: Address,
    pub consumer: PublicKeyId,
    pub producer: PublicKeyId,
    pub price: Amount,
    pub vote_fee: Amount,
    pub incentive: Amount,
    pub funding: Transaction,
    pub draft: Transaction,
}

impl VoucherOffer {
    pub fn escrow_lock(&self) -> OutputLock {
        OutputLock::PayToMultisig2of2(self.consumer, self.producer)
    }

    /// Checks that funding and draft have the shape promised by the offer
    /// fields. Does not consult the chain.
    pub fn check_structure(&self) -> Result<(), ProtocolError> {
        let bad = |msg: &str| Err(ProtocolError::MalformedOffer(msg.to_string()));
        let out1 = OutPoint::new(self.payment_txid, 0);
        if self.funding.inputs.len() != 1 || self.funding.inputs[0].prevout != out1 {
            return bad("funding must spend exactly the payment's price output");
        }
        let escrow_amount = self
            .incentive
            .checked_add(self.vote_fee)
            .ok_or(LedgerError::AmountOverflow)?;
        match self.funding.outputs.first() {
            Some(out) if out.lock == self.escrow_lock() && out.amount == escrow_amount => {}
            _ => return bad("funding output 0 must lock incentive + vote fee to the 2-of-2"),
        }
        if self.draft.inputs.len() != 1 || self.draft.inputs[0].prevout != self.funding.outpoint(0) {
            return bad("draft must spend funding output 0");
        }
        let markers: Vec<_> = self
            .draft
            .outputs
            .iter()
            .filter(|o| matches!(o.lock, OutputLock::Marker(_)))
            .collect();
        if markers.len() != 1
            || markers[0].lock != OutputLock::marker(&self.service)
            || !markers[0].amount.is_zero()
        {
            return bad("draft must send zero to the payment's service marker");
        }
        let incentive_paid: Amount = self
            .draft
            .outputs
            .iter()
            .filter(|o| o.lock == OutputLock::PayToKeyHash(self.consumer))
            .map(|o| o.amount)
            .sum();
        if incentive_paid != self.incentive || self.draft.outputs.len() != 1 + (!self.incentive.is_zero()) as usize {
            return bad("draft must pay exactly the incentive to the consumer");
        }
        let fee = escrow_amount.checked_sub(self.draft.output_total().ok_or(LedgerError::AmountOverflow)?);
        if fee != Some(self.vote_fee) {
            return bad("draft fee must equal the vote fee");
        }
        Ok(())
    }

    /// Checks the offer against the chain: the payment is confirmed, matches
    /// the offer, and its price output is unspent or spent by this funding.
    pub fn check_link(&self, chain: &Chain) -> Result<(), ProtocolError> {
        self.check_structure()?;
        let (tx, _) = chain
            .transaction(&self.payment_txid)
            .ok_or(ProtocolError::PaymentNotConfirmed(self.payment_txid))?;
        let payment = PaymentTx::parse(tx).map_err(|e| ProtocolError::LinkFailure(e.to_string()))?;
        if payment.marker != self.service
            || payment.consumer != self.consumer
            || payment.producer != self.producer
            || payment.price != self.price
        {
            return Err(ProtocolError::LinkFailure("offer fields differ from the payment".into()));
        }
        let out1 = payment.price_outpoint();
        if let Some(spender) = chain.spender(&out1) {
            if spender != self.funding.txid() {
                return Err(ProtocolError::Out1AlreadySpent { outpoint: out1, spender });
            }
        }
        Ok(())
    }
}

/// Producer side: funds the 2-of-2 escrow from the payment's price output
/// and drafts the voucher.
pub fn build_voucher_offer(
    payment: &PaymentTx,
    producer_wallet: &Wallet,
    chain: &Chain,
    terms: &OfferTerms,
) -> Result<VoucherOffer, ProtocolError> {
    let payment_txid = payment.txid();
    if chain.location(&payment_txid).is_none() {
        return Err(ProtocolError::PaymentNotConfirmed(payment_txid));
    }
    let out1 = payment.price_outpoint();
    if let Some(spender) = chain.spender(&out1) {
        return Err(ProtocolError::Out1AlreadySpent { outpoint: out1, spender });
    }
    let (_, producer_key) = producer_wallet
        .find(&payment.producer)
        .ok_or(ProtocolError::WrongKey(payment.producer))?;

    let vote_fee = terms.rate.vote_fee(payment.price);
    if let Some(minimum) = terms.fee_policy.minimum {
        if vote_fee < minimum {
            return Err(ProtocolError::VoteFeeBelowMinimum { fee: vote_fee, minimum });
        }
    }
    let too_large = || ProtocolError::IncentiveTooLarge {
        incentive: terms.incentive,
        vote_fee,
        funding_fee: terms.funding_fee,
        price: payment.price,
    };
    let escrow_amount = terms.incentive.checked_add(vote_fee).ok_or_else(too_large)?;
    let producer_change = escrow_amount
        .checked_add(terms.funding_fee)
        .and_then(|spent| payment.price.checked_sub(spent))
        .ok_or_else(too_large)?;

    let escrow_lock = OutputLock::PayToMultisig2of2(payment.consumer, payment.producer);
    let mut funding_outputs = vec![TxOut::new(escrow_amount, escrow_lock)];
    if !producer_change.is_zero() {
        funding_outputs.push(TxOut::new(producer_change, OutputLock::PayToKeyHash(payment.producer)));
    }
    let mut funding = Transaction::new([out1], funding_outputs);
    funding.sign_input(0, producer_key, &payment.tx.outputs[0].lock)?;

    let mut draft_outputs = Vec::with_capacity(2);
    if !terms.incentive.is_zero() {
        draft_outputs.push(TxOut::new(terms.incentive, OutputLock::PayToKeyHash(payment.consumer)));
    }
    draft_outputs.push(TxOut::new(Amount::ZERO, OutputLock::marker(&payment.marker)));
    let mut draft = Transaction::new([funding.outpoint(0)], draft_outputs);
    draft.sign_input(0, producer_key, &escrow_lock)?;

    Ok(VoucherOffer {
        payment_txid,
        service: payment.marker,
        consumer: payment.consumer,
        producer: payment.producer,
        price: payment.price,
        vote_fee,
        incentive: terms.incentive,
        funding,
        draft,
    })
}

/// Consumer side: adds the second signature, producing a valid voucher.
pub fn cosign_voucher(offer: &VoucherOffer, consumer: &KeyPair) -> Result<Transaction, ProtocolError> {
    if consumer.id() != offer.consumer {
        return Err(ProtocolError::WrongKey(consumer.id()));
    }
    let input = offer
        .draft
        .inputs
        .first()
        .ok_or_else(|| ProtocolError::MalformedOffer("draft has no input".into()))?;
    let signers: Vec<PublicKeyId> = input.signatures.iter().map(|s| s.signer()).collect();
    if signers.contains(&offer.consumer) {
        return Err(ProtocolError::AlreadyCosigned);
    }
    if !signers.contains(&offer.producer) {
        return Err(ProtocolError::MissingProducerSignature);
    }
    let lock = offer.escrow_lock();
    let mut voucher = offer.draft.clone();
    voucher.sign_input(0, consumer, &lock)?;
    voucher.check_input_signatures(0, &lock)?;
    Ok(voucher)
}

/// Text form of a [`VoucherOffer`] for out-of-band exchange.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OfferDocument {
    pub payment_txid: TxId,
    pub service: Address,
    pub consumer: PublicKeyId,
    pub producer: PublicKeyId,
    pub price: Amount,
    pub vote_fee: Amount,
    pub incentive: Amount,
    pub funding: TxRecord,
    pub draft: TxRecord,
}

impl From<&VoucherOffer> for OfferDocument {
    fn from(o: &VoucherOffer) -> Self {
        OfferDocument {
            payment_txid: o.payment_txid,
            service: o.service,
            consumer: o.consumer,
            producer: o.producer,
            price: o.price,
            vote_fee: o.vote_fee,
            incentive: o.incentive,
            funding: TxRecord::new(o.funding.clone()),
            draft: TxRecord::new(o.draft.clone()),
        }
    }
}

impl TryFrom<OfferDocument> for VoucherOffer {
    type Error = ProtocolError;

    fn try_from(d: OfferDocument) -> Result<Self, Self::Error> {
        for record in [&d.funding, &d.draft] {
            if record.tx.txid() != record.txid {
                return Err(ProtocolError::MalformedOffer(format!("txid mismatch for {}", record.txid)));
            }
        }
        let offer = VoucherOffer {
            payment_txid: d.payment_txid,
            service: d.service,
            consumer: d.consumer,
            producer: d.producer,
            price: d.price,
            vote_fee: d.vote_fee,
            incentive: d.incentive,
            funding: d.funding.tx,
            draft: d.draft.tx,
        };
        offer.check_structure()?;
        Ok(offer)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DealState {
    Ordered,
    Paid,
    Delivered,
    OfferSent,
    Accepted,
    Declined,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DealEvent {
    Order,
    Pay,
    Deliver,
    SendOffer,
    Cosign,
    Decline,
}

impl DealState {
    /// State after the consumer's order.
    pub fn start() -> DealState {
        DealState::Ordered
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, DealState::Accepted | DealState::Declined)
    }
}

pub fn advance(state: DealState, event: DealEvent) -> Result<DealState, ProtocolError> {
    use DealEvent::*;
    use DealState::*;
    match (state, event) {
        (Ordered, Pay) => Ok(Paid),
        (Paid, Deliver) => Ok(Delivered),
        (Delivered, SendOffer) => Ok(OfferSent),
        (OfferSent, Cosign) => Ok(Accepted),
        (OfferSent, Decline) => Ok(Declined),
        (from, event) => Err(ProtocolError::IllegalTransition { from, event }),
    }
}
