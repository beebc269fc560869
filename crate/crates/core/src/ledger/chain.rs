use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::codec::{self, TxId};

use super::{Amount, LedgerError, OutPoint, OutputLock, PublicKeyId, Transaction, TxOut};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Allocation {
    pub to: PublicKeyId,
    pub amount: Amount,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub subsidy: Amount,
    #[serde(default)]
    pub allocations: Vec<Allocation>,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            subsidy: Amount::from_coins(50),
            allocations: Vec::new(),
        }
    }
}

impl ChainConfig {
    pub fn with_allocation(mut self, to: PublicKeyId, amount: Amount) -> Self {
        self.allocations.push(Allocation { to, amount });
        self
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct BlockHash(pub [u8; 32]);

impl fmt::Display for BlockHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl fmt::Debug for BlockHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BlockHash({self})")
    }
}

impl Serialize for BlockHash {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(self.0))
    }
}

impl<'de> Deserialize<'de> for BlockHash {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        let mut out = [0u8; 32];
        hex::decode_to_slice(&text, &mut out).map_err(serde::de::Error::custom)?;
        Ok(BlockHash(out))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub height: u64,
    pub prev: BlockHash,
    /// Subsidy in force; the genesis value fixes it for the whole chain.
    pub subsidy: Amount,
    pub coinbase: Transaction,
    pub transactions: Vec<Transaction>,
}

impl Block {
    /// Double SHA-256 over height, previous digest, subsidy and all txids.
    pub fn digest(&self) -> BlockHash {
        let mut buf = Vec::with_capacity(88 + 32 * self.transactions.len());
        buf.extend_from_slice(&self.height.to_le_bytes());
        buf.extend_from_slice(&self.prev.0);
        buf.extend_from_slice(&self.subsidy.base_units().to_le_bytes());
        buf.extend_from_slice(&self.coinbase.txid().0);
        buf.extend_from_slice(&(self.transactions.len() as u64).to_le_bytes());
        for tx in &self.transactions {
            buf.extend_from_slice(&tx.txid().0);
        }
        BlockHash(codec::sha256d(&buf))
    }

    pub fn all_transactions(&self) -> impl Iterator<Item = &Transaction> {
        std::iter::once(&self.coinbase).chain(self.transactions.iter())
    }
}

/// Where a confirmed transaction lives. `position` 0 is the coinbase.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TxLocation {
    pub height: u64,
    pub position: usize,
}

/// State of an outpoint as seen by a validator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Coin {
    Unspent(TxOut),
    Spent,
    Missing,
}

pub trait UtxoView {
    fn coin(&self, outpoint: &OutPoint) -> Coin;
}

/// Validates `tx` against `view` and returns its fee.
pub fn validate_against(tx: &Transaction, view: &impl UtxoView) -> Result<Amount, LedgerError> {
    if tx.is_coinbase {
        return Err(LedgerError::UnexpectedCoinbase);
    }
    if tx.inputs.is_empty() {
        return Err(LedgerError::NoInputs);
    }
    let mut seen = HashSet::with_capacity(tx.inputs.len());
    let mut total_in = Amount::ZERO;
    for (index, input) in tx.inputs.iter().enumerate() {
        if !seen.insert(input.prevout) {
            return Err(LedgerError::DoubleSpend(input.prevout));
        }
        let prev = match view.coin(&input.prevout) {
            Coin::Unspent(out) => out,
            Coin::Spent => return Err(LedgerError::DoubleSpend(input.prevout)),
            Coin::Missing => return Err(LedgerError::MissingUtxo(input.prevout)),
        };
        tx.check_input_signatures(index, &prev.lock)?;
        total_in = total_in.checked_add(prev.amount).ok_or(LedgerError::AmountOverflow)?;
    }
    let total_out = tx.output_total().ok_or(LedgerError::AmountOverflow)?;
    total_in
        .checked_sub(total_out)
        .ok_or(LedgerError::ValueOverflow { inputs: total_in, outputs: total_out })
}

/// Chain snapshot plus the effects of not-yet-mined transactions applied in
/// order, so later pending transactions may spend earlier ones.
pub struct PendingView<'a> {
    chain: &'a Chain,
    created: HashMap<OutPoint, TxOut>,
    spent: HashSet<OutPoint>,
}

impl<'a> PendingView<'a> {
    pub fn new(chain: &'a Chain) -> Self {
        PendingView {
            chain,
            created: HashMap::new(),
            spent: HashSet::new(),
        }
    }

    /// Validates `tx` on top of the view, then applies it. Returns the fee.
    pub fn accept(&mut self, tx: &Transaction) -> Result<Amount, LedgerError> {
        let fee = validate_against(tx, self)?;
        self.apply(tx);
        Ok(fee)
    }

    fn apply(&mut self, tx: &Transaction) {
        for input in &tx.inputs {
            self.created.remove(&input.prevout);
            self.spent.insert(input.prevout);
        }
        let txid = tx.txid();
        for (vout, out) in tx.outputs.iter().enumerate() {
            self.created.insert(OutPoint::new(txid, vout as u32), out.clone());
        }
    }
}

impl UtxoView for PendingView<'_> {
    fn coin(&self, outpoint: &OutPoint) -> Coin {
        if self.spent.contains(outpoint) {
            return Coin::Spent;
        }
        if let Some(out) = self.created.get(outpoint) {
            return Coin::Unspent(out.clone());
        }
        self.chain.coin(outpoint)
    }
}

/// Append-only block list with the derived UTXO set.
#[derive(Debug, Clone)]
pub struct Chain {
    config: ChainConfig,
    blocks: Vec<Block>,
    utxo: BTreeMap<OutPoint, TxOut>,
    spent_by: HashMap<OutPoint, TxId>,
    locations: HashMap<TxId, TxLocation>,
    fees_collected: Amount,
}

impl Chain {
    /// Chain of height 0 whose genesis coinbase pays the configured allocations.
    pub fn new(config: ChainConfig) -> Chain {
        let outputs = config
            .allocations
            .iter()
            .map(|a| TxOut::new(a.amount, OutputLock::PayToKeyHash(a.to)))
            .collect();
        let genesis = Block {
            height: 0,
            prev: BlockHash::default(),
            subsidy: config.subsidy,
            coinbase: Transaction::coinbase(0, outputs),
            transactions: Vec::new(),
        };
        let mut chain = Chain {
            config,
            blocks: Vec::new(),
            utxo: BTreeMap::new(),
            spent_by: HashMap::new(),
            locations: HashMap::new(),
            fees_collected: Amount::ZERO,
        };
        chain.apply(genesis);
        chain
    }

    /// Rebuilds a chain from stored blocks, validating every block after genesis.
    pub fn from_blocks(blocks: impl IntoIterator<Item = Block>) -> Result<Chain, LedgerError> {
        let mut iter = blocks.into_iter();
        let genesis = iter
            .next()
            .ok_or_else(|| LedgerError::InvalidBlock("missing genesis block".into()))?;
        let invalid = |msg: &str| LedgerError::InvalidBlock(format!("genesis: {msg}"));
        if genesis.height != 0 || genesis.prev != BlockHash::default() {
            return Err(invalid("height and previous digest must be zero"));
        }
        if !genesis.transactions.is_empty() || !genesis.coinbase.is_coinbase {
            return Err(invalid("must hold a coinbase only"));
        }
        if !genesis.coinbase.inputs.is_empty() || genesis.coinbase.lock_height != 0 {
            return Err(invalid("malformed coinbase"));
        }
        let mut allocations = Vec::with_capacity(genesis.coinbase.outputs.len());
        for out in &genesis.coinbase.outputs {
            match out.lock {
                OutputLock::PayToKeyHash(to) => allocations.push(Allocation { to, amount: out.amount }),
                _ => return Err(invalid("allocations must be key-hash outputs")),
            }
        }
        let config = ChainConfig {
            subsidy: genesis.subsidy,
            allocations,
        };
        let mut chain = Chain::new(config);
        if chain.blocks[0] != genesis {
            return Err(invalid("does not match its own configuration"));
        }
        for block in iter {
            chain.append_block(block)?;
        }
        Ok(chain)
    }

    pub fn config(&self) -> &ChainConfig {
        &self.config
    }

    pub fn height(&self) -> u64 {
        self.blocks.len() as u64 - 1
    }

    pub fn tip(&self) -> &Block {
        self.blocks.last().expect("chain always has genesis")
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block(&self, height: u64) -> Option<&Block> {
        self.blocks.get(height as usize)
    }

    pub fn utxo(&self, outpoint: &OutPoint) -> Option<&TxOut> {
        self.utxo.get(outpoint)
    }

    pub fn utxos(&self) -> impl Iterator<Item = (&OutPoint, &TxOut)> {
        self.utxo.iter()
    }

    /// Txid of the confirmed transaction that spent `outpoint`, if any.
    pub fn spender(&self, outpoint: &OutPoint) -> Option<TxId> {
        self.spent_by.get(outpoint).copied()
    }

    pub fn location(&self, txid: &TxId) -> Option<TxLocation> {
        self.locations.get(txid).copied()
    }

    pub fn transaction(&self, txid: &TxId) -> Option<(&Transaction, u64)> {
        let loc = self.locations.get(txid)?;
        let block = &self.blocks[loc.height as usize];
        let tx = match loc.position {
            0 => &block.coinbase,
            p => &block.transactions[p - 1],
        };
        Some((tx, loc.height))
    }

    /// Any confirmed output, spent or not.
    pub fn output(&self, outpoint: &OutPoint) -> Option<&TxOut> {
        let (tx, _) = self.transaction(&outpoint.txid)?;
        tx.outputs.get(outpoint.vout as usize)
    }

    /// Sum of all unspent outputs.
    pub fn total_supply(&self) -> Amount {
        self.utxo.values().map(|o| o.amount).sum()
    }

    /// Genesis allocations plus one subsidy per mined block.
    pub fn issued(&self) -> Amount {
        let allocated: Amount = self.config.allocations.iter().map(|a| a.amount).sum();
        let mined = self.config.subsidy.base_units() * self.height();
        allocated
            .checked_add(Amount::from_base_units(mined))
            .expect("supply overflow")
    }

    /// Fees paid to miners over the whole chain.
    pub fn fees_collected(&self) -> Amount {
        self.fees_collected
    }

    pub fn validate_transaction(&self, tx: &Transaction) -> Result<Amount, LedgerError> {
        validate_against(tx, self)
    }

    /// Checks the signatures of every input of `tx` against the locks of the
    /// outputs it spends, whether or not they are still unspent.
    pub fn verify_signatures(&self, tx: &Transaction) -> Result<(), LedgerError> {
        for (index, input) in tx.inputs.iter().enumerate() {
            let prev = self
                .output(&input.prevout)
                .ok_or(LedgerError::MissingUtxo(input.prevout))?;
            tx.check_input_signatures(index, &prev.lock)?;
        }
        Ok(())
    }

    /// Builds the next block from `pending` without appending it.
    pub fn prepare_block(&self, pending: &[Transaction], miner: PublicKeyId) -> Result<Block, LedgerError> {
        let mut view = PendingView::new(self);
        let mut fees = Amount::ZERO;
        for tx in pending {
            let fee = view.accept(tx).map_err(|e| LedgerError::Conflict {
                txid: tx.txid(),
                source: Box::new(e),
            })?;
            fees = fees.checked_add(fee).ok_or(LedgerError::AmountOverflow)?;
        }
        let height = self.height() + 1;
        let reward = self.config.subsidy.checked_add(fees).ok_or(LedgerError::AmountOverflow)?;
        Ok(Block {
            height,
            prev: self.tip().digest(),
            subsidy: self.config.subsidy,
            coinbase: Transaction::coinbase(height, vec![TxOut::new(reward, OutputLock::PayToKeyHash(miner))]),
            transactions: pending.to_vec(),
        })
    }

    /// Appends a block of `pending` transactions whose coinbase pays `miner`
    /// the subsidy plus all fees. Rejects with the first conflicting txid.
    pub fn mine_block(&mut self, pending: &[Transaction], miner: PublicKeyId) -> Result<&Block, LedgerError> {
        let block = self.prepare_block(pending, miner)?;
        self.apply(block);
        Ok(self.tip())
    }

    /// Validates and appends an externally built block.
    pub fn append_block(&mut self, block: Block) -> Result<(), LedgerError> {
        self.check_block(&block)?;
        self.apply(block);
        Ok(())
    }

    fn check_block(&self, block: &Block) -> Result<Amount, LedgerError> {
        let invalid = |msg: String| LedgerError::InvalidBlock(format!("height {}: {msg}", block.height));
        if block.height != self.height() + 1 {
            return Err(invalid(format!("expected height {}", self.height() + 1)));
        }
        if block.prev != self.tip().digest() {
            return Err(invalid("previous digest does not match tip".into()));
        }
        if block.subsidy != self.config.subsidy {
            return Err(invalid(format!("subsidy {} differs from genesis", block.subsidy)));
        }
        let cb = &block.coinbase;
        if !cb.is_coinbase || !cb.inputs.is_empty() || cb.lock_height != block.height {
            return Err(invalid("malformed coinbase".into()));
        }
        let mut view = PendingView::new(self);
        let mut fees = Amount::ZERO;
        for tx in &block.transactions {
            let fee = view.accept(tx).map_err(|e| LedgerError::Conflict {
                txid: tx.txid(),
                source: Box::new(e),
            })?;
            fees = fees.checked_add(fee).ok_or(LedgerError::AmountOverflow)?;
        }
        let expected = self.config.subsidy.checked_add(fees).ok_or(LedgerError::AmountOverflow)?;
        let paid = cb.output_total().ok_or(LedgerError::AmountOverflow)?;
        if paid != expected {
            return Err(invalid(format!("coinbase pays {paid}, expected {expected}")));
        }
        Ok(fees)
    }

    fn apply(&mut self, block: Block) {
        let height = block.height;
        for (position, tx) in block.all_transactions().enumerate() {
            let txid = tx.txid();
            for input in &tx.inputs {
                self.utxo.remove(&input.prevout);
                self.spent_by.insert(input.prevout, txid);
            }
            for (vout, out) in tx.outputs.iter().enumerate() {
                self.utxo.insert(OutPoint::new(txid, vout as u32), out.clone());
            }
            self.locations.insert(txid, TxLocation { height, position });
        }
        if height > 0 {
            let paid: Amount = block.coinbase.outputs.iter().map(|o| o.amount).sum();
            self.fees_collected = self
                .fees_collected
                .checked_add(paid.saturating_sub(block.subsidy))
                .expect("fee overflow");
        }
        self.blocks.push(block);
    }
}

impl UtxoView for Chain {
    fn coin(&self, outpoint: &OutPoint) -> Coin {
        if let Some(out) = self.utxo.get(outpoint) {
            Coin::Unspent(out.clone())
        } else if self.spent_by.contains_key(outpoint) {
            Coin::Spent
        } else {
            Coin::Missing
        }
    }
}
