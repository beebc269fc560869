use std::collections::{BTreeMap, BTreeSet};

use super::{Amount, Chain, KeyPair, LedgerError, OutPoint, OutputLock, PublicKeyId, Transaction, TxOut};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OwnedOutput {
    pub outpoint: OutPoint,
    pub output: TxOut,
    pub key: String,
}

/// Named key pairs and the key-hash outputs they can spend.
///
/// The output set is a snapshot: [`Wallet::sync`] reloads it from a chain,
/// [`Wallet::apply`] folds in a transaction that has been built but not yet
/// mined so that later spends do not reuse its inputs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Wallet {
    keys: BTreeMap<String, KeyPair>,
    outputs: BTreeMap<OutPoint, OwnedOutput>,
    reserved: BTreeSet<OutPoint>,
}

impl Wallet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_key(&mut self, name: impl Into<String>, key: KeyPair) {
        self.keys.insert(name.into(), key);
    }

    pub fn key(&self, name: &str) -> Result<&KeyPair, LedgerError> {
        self.keys.get(name).ok_or_else(|| LedgerError::UnknownKey(name.to_string()))
    }

    pub fn keys(&self) -> impl Iterator<Item = (&String, &KeyPair)> {
        self.keys.iter()
    }

    /// Name of the key with the given id, if held.
    pub fn find(&self, id: &PublicKeyId) -> Option<(&str, &KeyPair)> {
        self.keys.iter().find(|(_, k)| k.id() == *id).map(|(n, k)| (n.as_str(), k))
    }

    fn owner_of(&self, lock: &OutputLock) -> Option<String> {
        match lock {
            OutputLock::PayToKeyHash(id) => self.find(id).map(|(n, _)| n.to_string()),
            _ => None,
        }
    }

    pub fn sync(&mut self, chain: &Chain) {
        self.outputs.clear();
        for (outpoint, output) in chain.utxos() {
            if let Some(key) = self.owner_of(&output.lock) {
                self.outputs.insert(
                    *outpoint,
                    OwnedOutput { outpoint: *outpoint, output: output.clone(), key },
                );
            }
        }
    }

    pub fn apply(&mut self, tx: &Transaction) {
        for input in &tx.inputs {
            self.outputs.remove(&input.prevout);
            self.reserved.remove(&input.prevout);
        }
        let txid = tx.txid();
        for (vout, output) in tx.outputs.iter().enumerate() {
            if let Some(key) = self.owner_of(&output.lock) {
                let outpoint = OutPoint::new(txid, vout as u32);
                self.outputs.insert(outpoint, OwnedOutput { outpoint, output: output.clone(), key });
            }
        }
    }

    /// Keeps `outpoint` out of [`Wallet::select`] until a transaction
    /// spending it is applied. Survives [`Wallet::sync`].
    pub fn reserve(&mut self, outpoint: OutPoint) {
        self.reserved.insert(outpoint);
    }

    pub fn release(&mut self, outpoint: &OutPoint) {
        self.reserved.remove(outpoint);
    }

    pub fn outputs(&self) -> impl Iterator<Item = &OwnedOutput> {
        self.outputs.values()
    }

    pub fn outputs_of<'a>(&'a self, key: &'a str) -> impl Iterator<Item = &'a OwnedOutput> + 'a {
        self.outputs.values().filter(move |o| o.key == key)
    }

    pub fn balance(&self) -> Amount {
        self.outputs.values().map(|o| o.output.amount).sum()
    }

    pub fn balance_of(&self, key: &str) -> Amount {
        self.outputs_of(key).map(|o| o.output.amount).sum()
    }

    /// Picks `key`'s unreserved outputs in outpoint order until they cover `target`.
    pub fn select(&self, key: &str, target: Amount) -> Result<(Vec<OwnedOutput>, Amount), LedgerError> {
        self.key(key)?;
        let mut picked = Vec::new();
        let mut total = Amount::ZERO;
        for owned in self.outputs_of(key).filter(|o| !self.reserved.contains(&o.outpoint)) {
            if total >= target && !picked.is_empty() {
                break;
            }
            total = total.checked_add(owned.output.amount).ok_or(LedgerError::AmountOverflow)?;
            picked.push(owned.clone());
        }
        if total < target || picked.is_empty() {
            return Err(LedgerError::InsufficientFunds { needed: target, available: total });
        }
        Ok((picked, total))
    }

    /// Signs every input whose spent output is held by this wallet.
    pub fn sign_owned_inputs(&self, tx: &mut Transaction, spent: &[OwnedOutput]) -> Result<(), LedgerError> {
        for (index, owned) in spent.iter().enumerate() {
            debug_assert_eq!(tx.inputs[index].prevout, owned.outpoint);
            tx.sign_input(index, self.key(&owned.key)?, &owned.output.lock)?;
        }
        Ok(())
    }
}
