//! Ed25519 keys and their text form: a `-----BEGIN ...-----` armour line,
//! the 32 raw key bytes in base64, and a matching `-----END ...-----` line.

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
pub use ed25519_dalek::{SigningKey, VerifyingKey};

use crate::merkle::{sha256, Digest};
use crate::{Error, Result};

const SECRET_LABEL: &str = "TRAINCERT ED25519 SECRET KEY";
const PUBLIC_LABEL: &str = "TRAINCERT ED25519 PUBLIC KEY";

pub fn generate_signing_key() -> SigningKey {
    let bytes: [u8; 32] = rand::random();
    SigningKey::from_bytes(&bytes)
}

pub fn key_fingerprint(key: &VerifyingKey) -> Digest {
    sha256(key.as_bytes())
}

fn armour(label: &str, bytes: &[u8]) -> String {
    format!("-----BEGIN {label}-----\n{}\n-----END {label}-----\n", STANDARD.encode(bytes))
}

fn unarmour(label: &str, text: &str) -> Result<[u8; 32]> {
    let begin = format!("-----BEGIN {label}-----");
    let end = format!("-----END {label}-----");
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    if lines.next() != Some(begin.as_str()) {
        return Err(Error::Key(format!("expected {begin}")));
    }
    let mut body = String::new();
    let mut closed = false;
    for line in lines.by_ref() {
        if line == end {
            closed = true;
            break;
        }
        body.push_str(line);
    }
    if !closed || lines.next().is_some() {
        return Err(Error::Key(format!("expected a single {label} block")));
    }
    let raw = STANDARD.decode(body).map_err(|e| Error::Key(e.to_string()))?;
    raw.try_into().map_err(|v: Vec<u8>| Error::Key(format!("key is {} bytes, expected 32", v.len())))
}

pub fn encode_secret_key(key: &SigningKey) -> String {
    armour(SECRET_LABEL, &key.to_bytes())
}

pub fn decode_secret_key(text: &str) -> Result<SigningKey> {
    Ok(SigningKey::from_bytes(&unarmour(SECRET_LABEL, text)?))
}

pub fn encode_public_key(key: &VerifyingKey) -> String {
    armour(PUBLIC_LABEL, key.as_bytes())
}

/// Raw public key bytes; point validity is checked at verification time.
pub fn decode_public_key(text: &str) -> Result<[u8; 32]> {
    unarmour(PUBLIC_LABEL, text)
}
