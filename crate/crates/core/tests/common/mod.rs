//! Seeded random chains for property tests.
//!
//! Blocks mix plain transfers, payments, fundings and vouchers (some
//! declined, some split across blocks, some escrows settled without a fee),
//! and injected double spends that must be rejected.

#![allow(dead_code)]

pub mod cli;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vouchrep::ledger::{Amount, Chain, ChainConfig, KeyPair, OutPoint, OutputLock, Transaction, TxOut, Wallet};
use vouchrep::protocol::{self, FeePolicy, OfferTerms, PaymentTx, Rate, ServiceDescriptor};

pub const KEYS: usize = 8;
pub const URLS: [&str; 4] = [
    "http://foo.bar",
    "https://example.org/transcode",
    "https://example.org/ocr",
    "http://weather.example/v2",
];

#[derive(Debug, Default, Clone)]
pub struct GenStats {
    pub transactions: usize,
    pub payments: usize,
    pub vouchers: usize,
    pub double_spends_tried: usize,
    pub double_spends_accepted: usize,
}

pub fn key_name(i: usize) -> String {
    format!("k{i}")
}

fn fee(rng: &mut ChaCha8Rng) -> Amount {
    Amount::from_base_units(rng.gen_range(0..=2_000))
}

fn gen_wallet() -> Wallet {
    let mut wallet = Wallet::new();
    for i in 0..KEYS {
        wallet.add_key(key_name(i), KeyPair::from_label(&format!("gen-key-{i}")));
    }
    wallet
}

/// Builds a chain of at most `max_txs` non-coinbase transactions, calling
/// `on_block` after every mined block (genesis included).
pub fn random_chain(seed: u64, max_txs: usize, mut on_block: impl FnMut(&Chain)) -> (Chain, GenStats) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut wallet = gen_wallet();
    let ids: Vec<_> = (0..KEYS).map(|i| wallet.key(&key_name(i)).unwrap().id()).collect();
    let mut config = ChainConfig { subsidy: Amount::from_coins(rng.gen_range(1..=50)), allocations: vec![] };
    for id in &ids {
        config = config.with_allocation(*id, Amount::from_coins(rng.gen_range(1..=20)));
    }
    let mut chain = Chain::new(config);
    on_block(&chain);
    wallet.sync(&chain);

    let mut stats = GenStats::default();
    let mut unanswered: Vec<PaymentTx> = Vec::new();
    let mut deferred: Vec<Transaction> = Vec::new();

    while stats.transactions < max_txs {
        let mut pending: Vec<Transaction> = std::mem::take(&mut deferred);
        for tx in &pending {
            wallet.apply(tx);
        }
        let budget = (max_txs - stats.transactions).min(rng.gen_range(1..=40));

        // answer payments mined earlier
        for payment in std::mem::take(&mut unanswered) {
            if pending.len() + deferred.len() + 2 > budget {
                break;
            }
            if rng.gen_bool(0.15) {
                continue;
            }
            let price = payment.price.base_units();
            let terms = OfferTerms {
                rate: Rate::new(rng.gen_range(1..=10), 100).unwrap(),
                incentive: Amount::from_base_units(rng.gen_range(0..=price / 2)),
                funding_fee: Amount::from_base_units(rng.gen_range(0..=500)),
                fee_policy: if rng.gen_bool(0.2) { FeePolicy::waived() } else { FeePolicy::default() },
            };
            let Ok(offer) = protocol::build_voucher_offer(&payment, &wallet, &chain, &terms) else {
                continue;
            };
            let roll: f64 = rng.gen();
            if roll < 0.2 {
                // declined
                continue;
            }
            wallet.apply(&offer.funding);
            pending.push(offer.funding.clone());
            let (_, consumer) = wallet.find(&offer.consumer).unwrap();
            let consumer = consumer.clone();
            let settle = if roll < 0.3 {
                // escrow released in full, no vote
                let (_, producer) = wallet.find(&offer.producer).unwrap();
                let producer = producer.clone();
                let escrow = offer.funding.outputs[0].clone();
                let mut tx = Transaction::new(
                    [offer.funding.outpoint(0)],
                    vec![TxOut::new(escrow.amount, OutputLock::PayToKeyHash(offer.consumer))],
                );
                tx.sign_input(0, &producer, &escrow.lock).unwrap();
                tx.sign_input(0, &consumer, &escrow.lock).unwrap();
                tx
            } else {
                stats.vouchers += 1;
                protocol::cosign_voucher(&offer, &consumer).unwrap()
            };
            if rng.gen_bool(0.25) {
                deferred.push(settle);
            } else {
                wallet.apply(&settle);
                pending.push(settle);
            }
        }

        let mut tries = 0;
        while pending.len() + deferred.len() < budget && tries < 200 {
            tries += 1;
            let from = rng.gen_range(0..KEYS);
            let from_name = key_name(from);
            let balance = wallet.balance_of(&from_name).base_units();
            if balance < 10_000 {
                continue;
            }
            if rng.gen_bool(0.45) {
                let mut to = rng.gen_range(0..KEYS - 1);
                if to >= from {
                    to += 1;
                }
                let url = URLS.choose(&mut rng).unwrap();
                let price = Amount::from_base_units(rng.gen_range(1_000..=balance / 2));
                let service = ServiceDescriptor::new(url).unwrap();
                match protocol::build_payment(&wallet, &from_name, ids[to], &service, price, fee(&mut rng)) {
                    Ok(payment) => {
                        wallet.apply(&payment.tx);
                        pending.push(payment.tx);
                        stats.payments += 1;
                    }
                    Err(_) => continue,
                }
            } else {
                let amount = rng.gen_range(1..=balance / 2);
                let fee = fee(&mut rng);
                let Ok((inputs, total)) = wallet.select(&from_name, Amount::from_base_units(amount + fee.base_units()))
                else {
                    continue;
                };
                let mut rest = total.base_units() - fee.base_units();
                let mut outputs = Vec::new();
                for _ in 0..rng.gen_range(1..=3) {
                    if rest == 0 {
                        break;
                    }
                    let part = rng.gen_range(1..=rest);
                    rest -= part;
                    outputs.push(TxOut::new(
                        Amount::from_base_units(part),
                        OutputLock::PayToKeyHash(ids[rng.gen_range(0..KEYS)]),
                    ));
                }
                if rest > 0 {
                    outputs.push(TxOut::new(Amount::from_base_units(rest), OutputLock::PayToKeyHash(ids[from])));
                }
                let mut tx = Transaction::new(inputs.iter().map(|o| o.outpoint), outputs);
                wallet.sign_owned_inputs(&mut tx, &inputs).unwrap();
                wallet.apply(&tx);
                pending.push(tx);
            }
        }

        // double spends: re-spend an input already spent on chain or in this block
        let attempts = rng.gen_range(0..=2);
        for _ in 0..attempts {
            let Some(victim) = pick_spent(&mut rng, &chain, &pending) else { break };
            let Some(output) = output_of(&chain, &pending, &victim) else { continue };
            let OutputLock::PayToKeyHash(owner) = output.lock else { continue };
            let Some((_, key)) = wallet.find(&owner) else { continue };
            let mut tx = Transaction::new(
                [victim],
                vec![TxOut::new(output.amount, OutputLock::PayToKeyHash(ids[rng.gen_range(0..KEYS)]))],
            );
            tx.lock_height = rng.gen();
            tx.sign_input(0, key, &output.lock).unwrap();
            stats.double_spends_tried += 1;
            let mut with_conflict = pending.clone();
            with_conflict.insert(rng.gen_range(0..=pending.len()), tx);
            let miner = ids[rng.gen_range(0..KEYS)];
            if chain.prepare_block(&with_conflict, miner).is_ok() {
                stats.double_spends_accepted += 1;
            }
        }

        let miner = ids[rng.gen_range(0..KEYS)];
        let block = chain.mine_block(&pending, miner).expect("generated block is valid");
        stats.transactions += block.transactions.len();
        for tx in &block.transactions {
            if let Ok(p) = PaymentTx::parse(tx) {
                unanswered.push(p);
            }
        }
        on_block(&chain);
        wallet.sync(&chain);
    }
    (chain, stats)
}

fn pick_spent(rng: &mut ChaCha8Rng, chain: &Chain, pending: &[Transaction]) -> Option<OutPoint> {
    let mut spent: Vec<OutPoint> = pending.iter().flat_map(|t| t.inputs.iter().map(|i| i.prevout)).collect();
    if let Some(block) = chain.blocks().choose(rng) {
        spent.extend(block.transactions.iter().flat_map(|t| t.inputs.iter().map(|i| i.prevout)));
    }
    spent.choose(rng).copied()
}

fn output_of(chain: &Chain, pending: &[Transaction], op: &OutPoint) -> Option<TxOut> {
    if let Some(out) = chain.output(op) {
        return Some(out.clone());
    }
    pending
        .iter()
        .find(|t| t.txid() == op.txid)
        .and_then(|t| t.outputs.get(op.vout as usize).cloned())
}

/// Per-block fee conservation and global supply, checked exactly.
pub fn check_conservation(chain: &Chain) -> Result<(), String> {
    let subsidy = chain.config().subsidy.base_units() as u128;
    for block in chain.blocks().iter().skip(1) {
        let mut fees: u128 = 0;
        for tx in &block.transactions {
            let ins: u128 = tx
                .inputs
                .iter()
                .map(|i| chain.output(&i.prevout).map(|o| o.amount.base_units() as u128).ok_or("missing input"))
                .sum::<Result<u128, _>>()?;
            let outs: u128 = tx.outputs.iter().map(|o| o.amount.base_units() as u128).sum();
            if outs > ins {
                return Err(format!("block {}: tx {} creates value", block.height, tx.txid()));
            }
            fees += ins - outs;
        }
        let minted: u128 = block.coinbase.outputs.iter().map(|o| o.amount.base_units() as u128).sum();
        if minted != subsidy + fees {
            return Err(format!("block {}: coinbase {minted} != subsidy {subsidy} + fees {fees}", block.height));
        }
    }
    let utxo_total: u128 = chain.utxos().map(|(_, o)| o.amount.base_units() as u128).sum();
    if utxo_total != chain.issued().base_units() as u128 || chain.total_supply() != chain.issued() {
        return Err(format!("supply {utxo_total} != issued {}", chain.issued()));
    }
    Ok(())
}

/// One signature combination on a voucher input.
pub struct ThresholdCase {
    pub label: String,
    pub expect_valid: bool,
    pub valid: bool,
}

/// Every one- and two-signer combination of {producer, consumer, stranger}
/// on the voucher input, plus the empty set and a corrupted signature, for
/// three deals.
pub fn threshold_corpus() -> Vec<ThresholdCase> {
    use vouchrep::ledger::InputSignature;

    let consumer = KeyPair::from_label("threshold-consumer");
    let producer = KeyPair::from_label("threshold-producer");
    let stranger = KeyPair::from_label("threshold-stranger");
    let mut wallet = Wallet::new();
    wallet.add_key("consumer", consumer.clone());
    wallet.add_key("producer", producer.clone());
    let mut chain = Chain::new(ChainConfig::default().with_allocation(consumer.id(), Amount::from_coins(5)));
    wallet.sync(&chain);
    let service = ServiceDescriptor::new("http://foo.bar").unwrap();

    let deals = [(10_000_000u64, 1_000_000u64, 3u64), (50_000_000, 0, 1), (1_000_000, 500_000, 10)];
    let mut cases = Vec::new();
    for (n, (price, incentive, pct)) in deals.into_iter().enumerate() {
        let payment = protocol::build_payment(&wallet, "consumer", producer.id(), &service, Amount::from_base_units(price), Amount::ZERO)
            .unwrap();
        chain.mine_block(std::slice::from_ref(&payment.tx), stranger.id()).unwrap();
        wallet.sync(&chain);
        let terms = OfferTerms::new(Rate::percent(pct).unwrap(), Amount::from_base_units(incentive));
        let offer = protocol::build_voucher_offer(&payment, &wallet, &chain, &terms).unwrap();
        chain.mine_block(std::slice::from_ref(&offer.funding), stranger.id()).unwrap();
        wallet.sync(&chain);

        let mut bare = offer.draft.clone();
        bare.inputs[0].signatures.clear();
        let sig = |key: &KeyPair| InputSignature { public_key: key.public(), signature: key.sign(&bare.signature_message(0)) };
        let (p, c, s) = (sig(&producer), sig(&consumer), sig(&stranger));
        let mut corrupted = c.clone();
        corrupted.signature[7] ^= 1;
        let combos: Vec<(&str, Vec<InputSignature>, bool)> = vec![
            ("none", vec![], false),
            ("producer", vec![p.clone()], false),
            ("consumer", vec![c.clone()], false),
            ("stranger", vec![s.clone()], false),
            ("producer+stranger", vec![p.clone(), s.clone()], false),
            ("consumer+stranger", vec![c.clone(), s.clone()], false),
            ("producer+corrupted-consumer", vec![p.clone(), corrupted], false),
            ("producer+producer", vec![p.clone(), p.clone()], false),
            ("producer+consumer", vec![p.clone(), c.clone()], true),
            ("consumer+producer", vec![c, p], true),
        ];
        for (label, sigs, expect_valid) in combos {
            let mut tx = bare.clone();
            tx.inputs[0].signatures = sigs;
            cases.push(ThresholdCase {
                label: format!("deal{n}/{label}"),
                expect_valid,
                valid: chain.validate_transaction(&tx).is_ok(),
            });
        }
    }
    cases
}
