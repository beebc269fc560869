use std::fmt;
use std::str::FromStr;

use ed25519_dalek::{Signer, SigningKey, Verifier, VerifyingKey};
use serde::{Deserialize, Serialize};

use crate::codec::{self, Address, CodecError, KEY_HASH_VERSION};

/// HASH160 of a verification key; the payload of a key-hash address.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PublicKeyId(pub [u8; 20]);

impl PublicKeyId {
    pub fn from_public_key(public: &[u8; 32]) -> Self {
        PublicKeyId(codec::hash160(public))
    }

    pub fn address(&self) -> Address {
        Address::new(KEY_HASH_VERSION, self.0)
    }
}

impl fmt::Display for PublicKeyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.address())
    }
}

impl fmt::Debug for PublicKeyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKeyId({})", self.address())
    }
}

impl FromStr for PublicKeyId {
    type Err = CodecError;

    /// Accepts only key-hash (version 0) addresses.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let addr: Address = s.parse()?;
        if addr.version != KEY_HASH_VERSION {
            return Err(CodecError::Malformed(format!(
                "expected a key-hash address, got version 0x{:02x}",
                addr.version
            )));
        }
        Ok(PublicKeyId(addr.payload))
    }
}

impl Serialize for PublicKeyId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.address().serialize(s)
    }
}

impl<'de> Deserialize<'de> for PublicKeyId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// Ed25519 key pair built from a 32-byte seed.
#[derive(Clone)]
pub struct KeyPair {
    seed: [u8; 32],
    signing: SigningKey,
}

impl KeyPair {
    pub fn from_seed(seed: [u8; 32]) -> Self {
        KeyPair {
            seed,
            signing: SigningKey::from_bytes(&seed),
        }
    }

    /// Deterministic key for a label, used by tests and the simulator.
    pub fn from_label(label: &str) -> Self {
        Self::from_seed(codec::sha256(label.as_bytes()))
    }

    pub fn seed(&self) -> &[u8; 32] {
        &self.seed
    }

    pub fn public(&self) -> [u8; 32] {
        self.signing.verifying_key().to_bytes()
    }

    pub fn id(&self) -> PublicKeyId {
        PublicKeyId::from_public_key(&self.public())
    }

    pub fn sign(&self, message: &[u8]) -> [u8; 64] {
        self.signing.sign(message).to_bytes()
    }
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair").field("id", &self.id()).finish_non_exhaustive()
    }
}

impl PartialEq for KeyPair {
    fn eq(&self, other: &Self) -> bool {
        self.seed == other.seed
    }
}

impl Eq for KeyPair {}

pub fn verify(public: &[u8; 32], message: &[u8], signature: &[u8; 64]) -> bool {
    let Ok(key) = VerifyingKey::from_bytes(public) else {
        return false;
    };
    let sig = ed25519_dalek::Signature::from_bytes(signature);
    key.verify(message, &sig).is_ok()
}
