use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::codec;
use crate::ledger::{
    Amount, Chain, ChainConfig, KeyPair, LedgerError, OutputLock, PublicKeyId, Transaction, TxOut,
    Wallet,
};
use crate::protocol::{
    self, advance, DealEvent, DealState, OfferTerms, PaymentTx, ProtocolError, ServiceDescriptor,
};
use crate::reputation::{full_rescan, ReputationIndex, ScoringMode, UrlRegistry};

use super::scenario::{CosignPolicy, Scenario};
use super::{AgentMetrics, AgentRole, SimError};

const MAIN_KEY: &str = "main";

struct Selling {
    service: ServiceDescriptor,
    price: Amount,
    delivery_success: f64,
}

struct Buying {
    purchase_rate: f64,
    policy: CosignPolicy,
}

struct Attack {
    identities: Vec<String>,
    deals_per_block: u32,
    next_identity: usize,
    exhausted: bool,
}

struct Agent {
    wallet: Wallet,
    main: PublicKeyId,
    selling: Option<Selling>,
    buying: Option<Buying>,
    attack: Option<Attack>,
    metrics: AgentMetrics,
}

struct Deal {
    buyer: usize,
    buyer_key: String,
    seller: usize,
    payment: PaymentTx,
    delivery_success: f64,
    policy: CosignPolicy,
}

/// A co-signed voucher waiting for the next block.
struct QueuedVote {
    buyer: usize,
    seller: usize,
    vote_fee: Amount,
    incentive: Amount,
}

/// Outcome of a simulation run.
#[derive(Debug, Clone)]
pub struct SimResult {
    pub scenario: Scenario,
    pub chain: Chain,
    /// Index under the scenario's scoring mode.
    pub index: ReputationIndex,
    pub registry: UrlRegistry,
    pub agents: Vec<AgentMetrics>,
    pub owners: BTreeMap<PublicKeyId, String>,
}

impl SimResult {
    pub fn agent(&self, name: &str) -> Option<&AgentMetrics> {
        self.agents.iter().find(|a| a.name == name)
    }

    /// Rebuilds the index from the chain under another mode.
    pub fn index_in(&self, mode: ScoringMode) -> ReputationIndex {
        full_rescan(&self.chain, mode)
    }

    /// Selling agents ordered by reputation, highest first.
    pub fn ranking(&self) -> Vec<(String, Amount)> {
        let mut ranked: Vec<(String, Amount)> = self
            .agents
            .iter()
            .filter(|a| matches!(a.role, AgentRole::Producer | AgentRole::Attacker))
            .map(|a| (a.name.clone(), a.reputation))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked
    }
}

/// One uniform draw per call, so every decision consumes the generator
/// identically whatever its probability.
fn draw(rng: &mut ChaCha20Rng, p: f64) -> bool {
    rng.gen::<f64>() < p
}

fn agent_key(seed: u64, name: &str, index: u32) -> KeyPair {
    KeyPair::from_seed(codec::sha256(format!("vouchrep-sim/{seed}/{name}/{index}").as_bytes()))
}

fn add(a: &mut Amount, b: Amount) {
    *a = a.checked_add(b).expect("metric overflow");
}

fn internal(e: impl std::fmt::Display) -> SimError {
    SimError::Internal(e.to_string())
}

/// Runs `scenario` to completion. Identical scenarios give identical chains.
pub fn run(scenario: &Scenario) -> Result<SimResult, SimError> {
    scenario.validate()?;
    let seed = scenario.seed;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut registry = UrlRegistry::new();
    let mut agents: Vec<Agent> = Vec::new();
    let mut config = ChainConfig { subsidy: scenario.subsidy, allocations: Vec::new() };

    let new_agent = |name: &str, role: AgentRole| {
        let key = agent_key(seed, name, 0);
        let main = key.id();
        let mut wallet = Wallet::new();
        wallet.add_key(MAIN_KEY, key);
        Agent {
            wallet,
            main,
            selling: None,
            buying: None,
            attack: None,
            metrics: AgentMetrics::new(name, role, main),
        }
    };

    for p in &scenario.producers {
        let mut agent = new_agent(&p.name, AgentRole::Producer);
        let service = ServiceDescriptor::new(&p.service).map_err(internal)?;
        registry.register(&p.service).map_err(internal)?;
        agent.selling = Some(Selling { service, price: p.price, delivery_success: p.delivery_success });
        if p.purchase_rate > 0.0 {
            agent.buying = Some(Buying { purchase_rate: p.purchase_rate, policy: CosignPolicy::CosignIfSatisfied });
        }
        if !p.funds.is_zero() {
            config = config.with_allocation(agent.main, p.funds);
        }
        agents.push(agent);
    }
    for c in &scenario.consumers {
        let mut agent = new_agent(&c.name, AgentRole::Consumer);
        agent.buying = Some(Buying { purchase_rate: c.purchase_rate, policy: c.policy });
        if !c.funds.is_zero() {
            config = config.with_allocation(agent.main, c.funds);
        }
        agents.push(agent);
    }
    for a in &scenario.attackers {
        let mut agent = new_agent(&a.name, AgentRole::Attacker);
        let service = ServiceDescriptor::new(&a.service).map_err(internal)?;
        registry.register(&a.service).map_err(internal)?;
        agent.selling = Some(Selling { service, price: a.price, delivery_success: 1.0 });
        let identities: Vec<String> = (0..a.identities).map(|i| format!("sybil{i}")).collect();
        for (i, id) in identities.iter().enumerate() {
            agent.wallet.add_key(id.clone(), agent_key(seed, &a.name, i as u32 + 1));
        }
        agent.attack = Some(Attack {
            identities,
            deals_per_block: a.deals_per_block,
            next_identity: 0,
            exhausted: false,
        });
        if !a.budget.is_zero() {
            config = config.with_allocation(agent.main, a.budget);
        }
        agents.push(agent);
    }
    let mut miners: Vec<usize> = Vec::with_capacity(scenario.miners.len());
    for name in &scenario.miners {
        let at = match agents.iter().position(|a| a.metrics.name == *name) {
            Some(i) => i,
            None => {
                agents.push(new_agent(name, AgentRole::Miner));
                agents.len() - 1
            }
        };
        miners.push(at);
    }

    let mut owners = BTreeMap::new();
    for agent in &agents {
        for (_, key) in agent.wallet.keys() {
            owners.insert(key.id(), agent.metrics.name.clone());
        }
    }

    let mut chain = Chain::new(config);
    for agent in agents.iter_mut() {
        agent.wallet.sync(&chain);
    }
    let mut index = ReputationIndex::new(scenario.mode);
    index.sync(&chain).map_err(internal)?;

    let terms = OfferTerms {
        rate: scenario.protocol.rate,
        incentive: scenario.protocol.incentive,
        funding_fee: scenario.protocol.funding_fee,
        fee_policy: scenario.fee_policy(),
    };
    let payment_fee = scenario.protocol.payment_fee;
    let sellers: Vec<usize> = agents
        .iter()
        .enumerate()
        .filter(|(_, a)| a.selling.is_some() && a.attack.is_none())
        .map(|(i, _)| i)
        .collect();

    let mut carried: Vec<Transaction> = Vec::new();
    let mut queued: Vec<QueuedVote> = Vec::new();

    for height in 1..=scenario.blocks + scenario.settle_blocks {
        let mut pending = std::mem::take(&mut carried);
        let mut deals: Vec<Deal> = Vec::new();
        let trading = height <= scenario.blocks;

        // honest purchases, fixed agent order
        for buyer in (0..agents.len()).filter(|_| trading) {
            let Some(buying) = &agents[buyer].buying else { continue };
            let policy = buying.policy;
            if !draw(&mut rng, buying.purchase_rate) {
                continue;
            }
            let choices: Vec<usize> = sellers.iter().copied().filter(|&s| s != buyer).collect();
            if choices.is_empty() {
                continue;
            }
            let seller = choices[rng.gen_range(0..choices.len())];
            let selling = agents[seller].selling.as_ref().expect("seller");
            let (service, price, delivery_success) =
                (selling.service.clone(), selling.price, selling.delivery_success);
            let producer = agents[seller].main;
            let agent = &mut agents[buyer];
            match protocol::build_payment(&agent.wallet, MAIN_KEY, producer, &service, price, payment_fee) {
                Ok(payment) => {
                    agent.wallet.apply(&payment.tx);
                    pending.push(payment.tx.clone());
                    deals.push(Deal {
                        buyer,
                        buyer_key: MAIN_KEY.into(),
                        seller,
                        payment,
                        delivery_success,
                        policy,
                    });
                }
                Err(ProtocolError::InsufficientFunds { .. }) => agent.metrics.skipped_purchases += 1,
                Err(e) => return Err(internal(e)),
            }
        }

        // self-dealing through fresh identities
        for at in (0..agents.len()).filter(|_| trading) {
            let agent = &mut agents[at];
            let Some(attack) = agent.attack.as_mut() else { continue };
            let selling = agent.selling.as_ref().expect("attacker sells");
            let (service, price) = (selling.service.clone(), selling.price);
            for _ in 0..attack.deals_per_block {
                if attack.exhausted {
                    break;
                }
                let identity = attack.identities[attack.next_identity % attack.identities.len()].clone();
                attack.next_identity += 1;
                let need = price.checked_add(payment_fee).ok_or_else(|| internal("price overflow"))?;
                let have = agent.wallet.balance_of(&identity);
                if have < need {
                    let top_up = need.checked_sub(have).expect("have < need");
                    match transfer(&agent.wallet, MAIN_KEY, &identity, top_up, payment_fee) {
                        Ok(tx) => {
                            agent.wallet.apply(&tx);
                            add(&mut agent.metrics.miner_fees_paid, payment_fee);
                            pending.push(tx);
                        }
                        Err(LedgerError::InsufficientFunds { .. }) => {
                            attack.exhausted = true;
                            break;
                        }
                        Err(e) => return Err(internal(e)),
                    }
                }
                let payment = protocol::build_payment(&agent.wallet, &identity, agent.main, &service, price, payment_fee)
                    .map_err(internal)?;
                agent.wallet.apply(&payment.tx);
                // the price output backs this deal's escrow
                agent.wallet.reserve(payment.price_outpoint());
                pending.push(payment.tx.clone());
                deals.push(Deal {
                    buyer: at,
                    buyer_key: identity,
                    seller: at,
                    payment,
                    delivery_success: 1.0,
                    policy: CosignPolicy::AlwaysCosign,
                });
            }
        }

        let miner = miners[((height - 1) % miners.len() as u64) as usize];
        let block = chain.mine_block(&pending, agents[miner].main).map_err(internal)?;
        let reward: Amount = block.coinbase.outputs.iter().map(|o| o.amount).sum();
        add(&mut agents[miner].metrics.mining_rewards, reward);
        debug_assert_eq!(chain.total_supply(), chain.issued());

        for vote in queued.drain(..) {
            let seller = &mut agents[vote.seller].metrics;
            add(&mut seller.vote_fees_paid, vote.vote_fee);
            add(&mut seller.incentives_paid, vote.incentive);
            add(&mut seller.miner_fees_paid, terms.funding_fee);
            add(&mut agents[vote.buyer].metrics.incentives_received, vote.incentive);
        }
        for deal in &deals {
            let price = deal.payment.price;
            let buyer = &mut agents[deal.buyer].metrics;
            buyer.purchases += 1;
            add(&mut buyer.spent_on_purchases, price);
            add(&mut buyer.miner_fees_paid, payment_fee);
            let seller = &mut agents[deal.seller].metrics;
            seller.sales += 1;
            add(&mut seller.sales_revenue, price);
        }

        index.index_block(chain.tip()).map_err(internal)?;
        for agent in agents.iter_mut() {
            agent.wallet.sync(&chain);
        }

        for deal in deals {
            let satisfied = draw(&mut rng, deal.delivery_success);
            let mut state = DealState::start();
            state = advance(state, DealEvent::Pay).map_err(internal)?;
            state = advance(state, DealEvent::Deliver).map_err(internal)?;
            let offer = match protocol::build_voucher_offer(&deal.payment, &agents[deal.seller].wallet, &chain, &terms) {
                Ok(offer) => offer,
                Err(ProtocolError::VoteFeeBelowMinimum { .. } | ProtocolError::IncentiveTooLarge { .. }) => {
                    agents[deal.seller].wallet.release(&deal.payment.price_outpoint());
                    agents[deal.seller].metrics.offers_failed += 1;
                    continue;
                }
                Err(e) => return Err(internal(e)),
            };
            state = advance(state, DealEvent::SendOffer).map_err(internal)?;
            agents[deal.seller].metrics.offers_sent += 1;
            let cosign = match deal.policy {
                CosignPolicy::CosignIfSatisfied => satisfied,
                CosignPolicy::AlwaysCosign => true,
                CosignPolicy::NeverCosign => false,
            };
            if cosign {
                let key = agents[deal.buyer].wallet.key(&deal.buyer_key).map_err(internal)?.clone();
                let voucher = protocol::cosign_voucher(&offer, &key).map_err(internal)?;
                agents[deal.seller].wallet.apply(&offer.funding);
                add(&mut agents[deal.seller].metrics.vote_fees_offered, offer.vote_fee);
                carried.push(offer.funding.clone());
                carried.push(voucher);
                queued.push(QueuedVote {
                    buyer: deal.buyer,
                    seller: deal.seller,
                    vote_fee: offer.vote_fee,
                    incentive: offer.incentive,
                });
                state = advance(state, DealEvent::Cosign).map_err(internal)?;
                agents[deal.buyer].metrics.cosigned += 1;
            } else {
                agents[deal.seller].wallet.release(&deal.payment.price_outpoint());
                state = advance(state, DealEvent::Decline).map_err(internal)?;
                agents[deal.buyer].metrics.declined += 1;
            }
            debug_assert!(state.is_terminal());
        }
    }

    let unweighted = match scenario.mode {
        ScoringMode::Unweighted => index.clone(),
        _ => full_rescan(&chain, ScoringMode::Unweighted),
    };
    for agent in agents.iter_mut() {
        let m = &mut agent.metrics;
        m.reputation = index.reputation_of_producer(&agent.main).total;
        m.reputation_unweighted = unweighted.reputation_of_producer(&agent.main).total;
        m.unconfirmed_vouchers = 0;
    }
    for vote in &queued {
        agents[vote.seller].metrics.unconfirmed_vouchers += 1;
    }
    for event in unweighted.events() {
        let (Some(voter), Some(producer)) = (owners.get(&event.voter), owners.get(&event.producer)) else {
            continue;
        };
        if voter == producer {
            if let Some(agent) = agents.iter_mut().find(|a| a.metrics.name == *producer) {
                add(&mut agent.metrics.self_financed_reputation, event.vote_fee);
            }
        }
    }

    Ok(SimResult {
        scenario: scenario.clone(),
        chain,
        index,
        registry,
        agents: agents.into_iter().map(|a| a.metrics).collect(),
        owners,
    })
}

/// Plain key-to-key transfer inside one wallet.
fn transfer(wallet: &Wallet, from: &str, to: &str, amount: Amount, fee: Amount) -> Result<Transaction, LedgerError> {
    let target = amount.checked_add(fee).ok_or(LedgerError::AmountOverflow)?;
    let (inputs, total) = wallet.select(from, target)?;
    let change = total.checked_sub(target).expect("selection covers target");
    let mut outputs = vec![TxOut::new(amount, OutputLock::PayToKeyHash(wallet.key(to)?.id()))];
    if !change.is_zero() {
        outputs.push(TxOut::new(change, OutputLock::PayToKeyHash(wallet.key(from)?.id())));
    }
    let mut tx = Transaction::new(inputs.iter().map(|o| o.outpoint), outputs);
    wallet.sign_owned_inputs(&mut tx, &inputs)?;
    Ok(tx)
}
