//! Hashing, Base58Check addresses and canonical transaction encoding.
//!
//! Service markers are ordinary version-0 addresses whose payload is the
//! HASH160 of a service URL. Nobody holds a key hashing to that payload, so a
//! zero-valued output to the marker tags a transaction with the service
//! identity without moving money.

use std::fmt;
use std::str::FromStr;

use ripemd::Ripemd160;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ledger::{OutputLock, Transaction};

/// Version byte for pay-to-key-hash addresses and service markers.
pub const KEY_HASH_VERSION: u8 = 0x00;
/// Version byte for 2-of-2 script-hash addresses.
pub const SCRIPT_HASH_VERSION: u8 = 0x05;

const ALPHABET: &[u8; 58] = b"123456789ABCDEFGHJKLMNPQRSTUVWXYZabcdefghijkmnopqrstuvwxyz";
const PAYLOAD_LEN: usize = 20;
const CHECKSUM_LEN: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("invalid payload: expected 20 bytes, got {0}")]
    InvalidPayload(usize),
    #[error("malformed address: {0}")]
    Malformed(String),
    #[error("checksum mismatch")]
    Checksum,
    #[error("invalid service: url must be non-empty")]
    InvalidService,
}

pub fn sha256(data: &[u8]) -> [u8; 32] {
    Sha256::digest(data).into()
}

/// SHA-256 applied twice.
pub fn sha256d(data: &[u8]) -> [u8; 32] {
    sha256(&sha256(data))
}

/// RIPEMD-160 of SHA-256 of `data`.
pub fn hash160(data: &[u8]) -> [u8; 20] {
    Ripemd160::digest(sha256(data)).into()
}

/// Plain Base58 (no checksum). Each leading zero byte becomes a leading '1'.
pub fn base58_encode(bytes: &[u8]) -> String {
    let zeros = bytes.iter().take_while(|&&b| b == 0).count();
    // base-58 digits, least significant first
    let mut digits: Vec<u8> = Vec::with_capacity(bytes.len() * 138 / 100 + 1);
    for &byte in &bytes[zeros..] {
        let mut carry = byte as u32;
        for d in digits.iter_mut() {
            carry += (*d as u32) << 8;
            *d = (carry % 58) as u8;
            carry /= 58;
        }
        while carry > 0 {
            digits.push((carry % 58) as u8);
            carry /= 58;
        }
    }
    let mut out = String::with_capacity(zeros + digits.len());
    out.extend(std::iter::repeat_n('1', zeros));
    out.extend(digits.iter().rev().map(|&d| ALPHABET[d as usize] as char));
    out
}

pub fn base58_decode(text: &str) -> Result<Vec<u8>, CodecError> {
    let zeros = text.bytes().take_while(|&c| c == b'1').count();
    // base-256 bytes, least significant first
    let mut bytes: Vec<u8> = Vec::with_capacity(text.len());
    for (pos, c) in text.char_indices().skip(zeros) {
        let value = ALPHABET
            .iter()
            .position(|&a| a as char == c)
            .ok_or_else(|| CodecError::Malformed(format!("invalid character {c:?} at {pos}")))?;
        let mut carry = value as u32;
        for b in bytes.iter_mut() {
            carry += (*b as u32) * 58;
            *b = (carry & 0xff) as u8;
            carry >>= 8;
        }
        while carry > 0 {
            bytes.push((carry & 0xff) as u8);
            carry >>= 8;
        }
    }
    let mut out = vec![0u8; zeros];
    out.extend(bytes.iter().rev());
    Ok(out)
}

fn checksum(body: &[u8]) -> [u8; CHECKSUM_LEN] {
    let digest = sha256d(body);
    [digest[0], digest[1], digest[2], digest[3]]
}

/// `Base58(version ‖ payload ‖ checksum)`, checksum being the first four
/// bytes of the double SHA-256 of `version ‖ payload`.
pub fn base58check_encode(version: u8, payload: &[u8]) -> Result<String, CodecError> {
    if payload.len() != PAYLOAD_LEN {
        return Err(CodecError::InvalidPayload(payload.len()));
    }
    let mut body = Vec::with_capacity(1 + PAYLOAD_LEN + CHECKSUM_LEN);
    body.push(version);
    body.extend_from_slice(payload);
    let check = checksum(&body);
    body.extend_from_slice(&check);
    Ok(base58_encode(&body))
}

pub fn base58check_decode(text: &str) -> Result<(u8, [u8; 20]), CodecError> {
    if text.is_empty() {
        return Err(CodecError::Malformed("empty string".into()));
    }
    let raw = base58_decode(text)?;
    if raw.len() != 1 + PAYLOAD_LEN + CHECKSUM_LEN {
        return Err(CodecError::Malformed(format!(
            "decoded length {} (expected {})",
            raw.len(),
            1 + PAYLOAD_LEN + CHECKSUM_LEN
        )));
    }
    let (body, check) = raw.split_at(1 + PAYLOAD_LEN);
    if checksum(body) != check {
        return Err(CodecError::Checksum);
    }
    let mut payload = [0u8; PAYLOAD_LEN];
    payload.copy_from_slice(&body[1..]);
    Ok((body[0], payload))
}

/// A versioned 20-byte digest with its Base58Check text form.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Address {
    pub version: u8,
    pub payload: [u8; 20],
}

impl Address {
    pub fn new(version: u8, payload: [u8; 20]) -> Self {
        Self { version, payload }
    }

    pub fn key_hash(payload: [u8; 20]) -> Self {
        Self::new(KEY_HASH_VERSION, payload)
    }

    pub fn text(&self) -> String {
        base58check_encode(self.version, &self.payload).expect("payload is 20 bytes")
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text())
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Address({})", self.text())
    }
}

impl FromStr for Address {
    type Err = CodecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (version, payload) = base58check_decode(s)?;
        Ok(Self { version, payload })
    }
}

impl Serialize for Address {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.text())
    }
}

impl<'de> Deserialize<'de> for Address {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// The service marker S* for a URL: version 0, payload HASH160(url).
pub fn derive_service_address(url: &str) -> Result<Address, CodecError> {
    if url.is_empty() {
        return Err(CodecError::InvalidService);
    }
    Ok(Address::new(KEY_HASH_VERSION, hash160(url.as_bytes())))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AddressClass {
    KeyHash,
    ScriptHash,
    Invalid(CodecError),
}

pub fn validate_address(text: &str) -> AddressClass {
    match base58check_decode(text) {
        Ok((KEY_HASH_VERSION, _)) => AddressClass::KeyHash,
        Ok((SCRIPT_HASH_VERSION, _)) => AddressClass::ScriptHash,
        Ok((v, _)) => AddressClass::Invalid(CodecError::Malformed(format!(
            "unknown version byte 0x{v:02x}"
        ))),
        Err(e) => AddressClass::Invalid(e),
    }
}

/// Double SHA-256 of the signature-free canonical serialization.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct TxId(pub [u8; 32]);

impl TxId {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Display for TxId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for TxId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TxId({})", self.to_hex())
    }
}

impl FromStr for TxId {
    type Err = hex::FromHexError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut id = [0u8; 32];
        hex::decode_to_slice(s, &mut id)?;
        Ok(TxId(id))
    }
}

impl Serialize for TxId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for TxId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

const LOCK_KEY_HASH: u64 = 0;
const LOCK_MULTISIG: u64 = 1;
const LOCK_MARKER: u64 = 2;

fn put_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_bytes(buf: &mut Vec<u8>, bytes: &[u8]) {
    buf.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
    buf.extend_from_slice(bytes);
}

/// Signature-free body of `tx`.
///
/// Layout: input count, then per input (prev txid, prev index); output
/// count, then per output (amount, lock tag, lock hashes); coinbase flag;
/// lock height. Integers are 8-byte little-endian, digests are
/// length-prefixed with a 4-byte little-endian length.
pub fn canonical_serialize(tx: &Transaction) -> Vec<u8> {
    let mut buf = Vec::with_capacity(32 + tx.inputs.len() * 48 + tx.outputs.len() * 72);
    put_u64(&mut buf, tx.inputs.len() as u64);
    for input in &tx.inputs {
        put_bytes(&mut buf, &input.prevout.txid.0);
        put_u64(&mut buf, input.prevout.vout as u64);
    }
    put_u64(&mut buf, tx.outputs.len() as u64);
    for output in &tx.outputs {
        put_u64(&mut buf, output.amount.base_units());
        match &output.lock {
            OutputLock::PayToKeyHash(k) => {
                put_u64(&mut buf, LOCK_KEY_HASH);
                put_bytes(&mut buf, &k.0);
            }
            OutputLock::PayToMultisig2of2(a, b) => {
                put_u64(&mut buf, LOCK_MULTISIG);
                put_bytes(&mut buf, &a.0);
                put_bytes(&mut buf, &b.0);
            }
            OutputLock::Marker(m) => {
                put_u64(&mut buf, LOCK_MARKER);
                put_bytes(&mut buf, m);
            }
        }
    }
    put_u64(&mut buf, tx.is_coinbase as u64);
    put_u64(&mut buf, tx.lock_height);
    buf
}

pub fn txid(tx: &Transaction) -> TxId {
    TxId(sha256d(&canonical_serialize(tx)))
}
