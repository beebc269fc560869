use serde::{Deserialize, Serialize};

use crate::codec::{self, Address, TxId};

use super::keys::{self, KeyPair, PublicKeyId};
use super::{Amount, LedgerError};

/// Reference to an output of an earlier transaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct OutPoint {
    pub txid: TxId,
    pub vout: u32,
}

impl OutPoint {
    pub fn new(txid: TxId, vout: u32) -> Self {
        OutPoint { txid, vout }
    }
}

impl std::fmt::Display for OutPoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.txid, self.vout)
    }
}

/// Spending condition attached to an output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "LockRepr", from = "LockRepr")]
pub enum OutputLock {
    PayToKeyHash(PublicKeyId),
    /// Spendable only with signatures from both keys.
    PayToMultisig2of2(PublicKeyId, PublicKeyId),
    /// Zero-valued service tag; the payload is a service marker digest.
    Marker([u8; 20]),
}

impl OutputLock {
    pub fn marker(address: &Address) -> Self {
        OutputLock::Marker(address.payload)
    }

    /// Key hashes allowed to sign for this lock.
    pub fn signers(&self) -> Vec<[u8; 20]> {
        match self {
            OutputLock::PayToKeyHash(k) => vec![k.0],
            OutputLock::PayToMultisig2of2(a, b) => vec![a.0, b.0],
            OutputLock::Marker(m) => vec![*m],
        }
    }

    /// Text address of the lock (script-hash form for 2-of-2).
    pub fn address(&self) -> Address {
        match self {
            OutputLock::PayToKeyHash(k) => k.address(),
            OutputLock::PayToMultisig2of2(a, b) => {
                let mut script = Vec::with_capacity(40);
                script.extend_from_slice(&a.0);
                script.extend_from_slice(&b.0);
                Address::new(codec::SCRIPT_HASH_VERSION, codec::hash160(&script))
            }
            OutputLock::Marker(m) => Address::key_hash(*m),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum LockRepr {
    P2pkh { key_hash: PublicKeyId },
    Multisig2of2 { first: PublicKeyId, second: PublicKeyId },
    Marker { service: Address },
}

impl From<OutputLock> for LockRepr {
    fn from(lock: OutputLock) -> Self {
        match lock {
            OutputLock::PayToKeyHash(k) => LockRepr::P2pkh { key_hash: k },
            OutputLock::PayToMultisig2of2(a, b) => LockRepr::Multisig2of2 { first: a, second: b },
            OutputLock::Marker(m) => LockRepr::Marker { service: Address::key_hash(m) },
        }
    }
}

impl From<LockRepr> for OutputLock {
    fn from(repr: LockRepr) -> Self {
        match repr {
            LockRepr::P2pkh { key_hash } => OutputLock::PayToKeyHash(key_hash),
            LockRepr::Multisig2of2 { first, second } => OutputLock::PayToMultisig2of2(first, second),
            LockRepr::Marker { service } => OutputLock::Marker(service.payload),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TxOut {
    pub amount: Amount,
    pub lock: OutputLock,
}

impl TxOut {
    pub fn new(amount: Amount, lock: OutputLock) -> Self {
        TxOut { amount, lock }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InputSignature {
    #[serde(with = "hex_array")]
    pub public_key: [u8; 32],
    #[serde(with = "hex_array")]
    pub signature: [u8; 64],
}

impl InputSignature {
    pub fn signer(&self) -> PublicKeyId {
        PublicKeyId::from_public_key(&self.public_key)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TxIn {
    pub prevout: OutPoint,
    #[serde(default)]
    pub signatures: Vec<InputSignature>,
}

impl TxIn {
    pub fn new(prevout: OutPoint) -> Self {
        TxIn { prevout, signatures: Vec::new() }
    }
}

/// A UTXO-consuming record. The fee is implicit: inputs minus outputs.
///
/// `lock_height` is the block height for coinbase transactions (so that two
/// coinbases paying the same miner the same amount still differ) and 0
/// otherwise.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Transaction {
    pub inputs: Vec<TxIn>,
    pub outputs: Vec<TxOut>,
    #[serde(default)]
    pub is_coinbase: bool,
    #[serde(default)]
    pub lock_height: u64,
}

impl Transaction {
    pub fn new(prevouts: impl IntoIterator<Item = OutPoint>, outputs: Vec<TxOut>) -> Self {
        Transaction {
            inputs: prevouts.into_iter().map(TxIn::new).collect(),
            outputs,
            is_coinbase: false,
            lock_height: 0,
        }
    }

    pub fn coinbase(height: u64, outputs: Vec<TxOut>) -> Self {
        Transaction {
            inputs: Vec::new(),
            outputs,
            is_coinbase: true,
            lock_height: height,
        }
    }

    pub fn txid(&self) -> TxId {
        codec::txid(self)
    }

    pub fn outpoint(&self, vout: u32) -> OutPoint {
        OutPoint::new(self.txid(), vout)
    }

    pub fn output_total(&self) -> Option<Amount> {
        self.outputs
            .iter()
            .try_fold(Amount::ZERO, |acc, o| acc.checked_add(o.amount))
    }

    /// Message signed for input `index`: double SHA-256 of txid ‖ index.
    pub fn signature_message(&self, index: usize) -> [u8; 32] {
        let mut msg = Vec::with_capacity(40);
        msg.extend_from_slice(&self.txid().0);
        msg.extend_from_slice(&(index as u64).to_le_bytes());
        codec::sha256d(&msg)
    }

    /// Adds `keypair`'s signature to input `index`, which spends an output
    /// locked by `lock`. Signing twice with the same key is a no-op.
    pub fn sign_input(
        &mut self,
        index: usize,
        keypair: &KeyPair,
        lock: &OutputLock,
    ) -> Result<(), LedgerError> {
        if index >= self.inputs.len() {
            return Err(LedgerError::InputIndex(index));
        }
        let id = keypair.id();
        if !lock.signers().contains(&id.0) {
            return Err(LedgerError::WrongKey { input: index, key: id });
        }
        let public_key = keypair.public();
        if self.inputs[index].signatures.iter().any(|s| s.public_key == public_key) {
            return Ok(());
        }
        let signature = keypair.sign(&self.signature_message(index));
        self.inputs[index].signatures.push(InputSignature { public_key, signature });
        Ok(())
    }

    /// Checks input `index`'s signatures against `lock`.
    pub fn check_input_signatures(&self, index: usize, lock: &OutputLock) -> Result<(), LedgerError> {
        let input = self.inputs.get(index).ok_or(LedgerError::InputIndex(index))?;
        let message = self.signature_message(index);
        let allowed = lock.signers();
        let mut seen: Vec<[u8; 20]> = Vec::with_capacity(2);
        for sig in &input.signatures {
            let signer = sig.signer();
            if !allowed.contains(&signer.0) {
                return Err(LedgerError::BadSignature {
                    input: index,
                    reason: format!("unexpected signer {signer}"),
                });
            }
            if !keys::verify(&sig.public_key, &message, &sig.signature) {
                return Err(LedgerError::BadSignature {
                    input: index,
                    reason: format!("invalid signature by {signer}"),
                });
            }
            if !seen.contains(&signer.0) {
                seen.push(signer.0);
            }
        }
        match (allowed.len(), seen.len()) {
            (_, 0) => Err(LedgerError::BadSignature {
                input: index,
                reason: "missing signature".into(),
            }),
            (2, 1) => Err(LedgerError::MissingCosignature { input: index }),
            _ => Ok(()),
        }
    }
}

mod hex_array {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer, const N: usize>(bytes: &[u8; N], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>, const N: usize>(d: D) -> Result<[u8; N], D::Error> {
        let text = String::deserialize(d)?;
        let mut out = [0u8; N];
        hex::decode_to_slice(&text, &mut out).map_err(serde::de::Error::custom)?;
        Ok(out)
    }
}
