use ed25519_dalek::{Signature, Signer, SigningKey, VerifyingKey};

use super::{keys::key_fingerprint, AttestationRecord, Mode, FORMAT_VERSION, HASH_SHA256, SIG_ED25519};
use crate::codec::{Reader, Writer};
use crate::merkle::Digest;
use crate::{Error, Result};

pub const CONTAINER_MAGIC: &[u8; 4] = b"TCAT";

/// Domain tag prepended to `h_root` before signing.
pub const ROOT_CONTEXT: &[u8] = b"traincert attestation root v1\0";

/// `h_root` with an Ed25519 signature and the SHA-256 fingerprint of the
/// signing public key.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SignedRoot {
    pub root: Digest,
    pub signature: [u8; 64],
    pub key_fingerprint: Digest,
}

impl SignedRoot {
    pub const LEN: usize = 32 + 64 + 32;

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::with_capacity(Self::LEN);
        w.bytes(&self.root.0).bytes(&self.signature).bytes(&self.key_fingerprint.0);
        w.finish()
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self> {
        Ok(Self { root: Digest(r.array()?), signature: r.array()?, key_fingerprint: Digest(r.array()?) })
    }
}

fn signed_message(root: &Digest) -> Vec<u8> {
    let mut m = ROOT_CONTEXT.to_vec();
    m.extend_from_slice(&root.0);
    m
}

pub fn sign_root(root: Digest, key: &SigningKey) -> SignedRoot {
    let signature = key.sign(&signed_message(&root)).to_bytes();
    SignedRoot { root, signature, key_fingerprint: key_fingerprint(&key.verifying_key()) }
}

pub fn sign_record(record: &AttestationRecord, key: &SigningKey) -> SignedRoot {
    sign_root(record.root(), key)
}

/// Strict Ed25519 check of the signature over the context-tagged root.
/// A public key that is malformed, or whose fingerprint differs from the
/// one recorded, yields `false`.
pub fn verify_signature(signed: &SignedRoot, public_key: &[u8]) -> bool {
    let Ok(bytes) = <[u8; 32]>::try_from(public_key) else {
        return false;
    };
    let Ok(vk) = VerifyingKey::from_bytes(&bytes) else {
        return false;
    };
    if key_fingerprint(&vk) != signed.key_fingerprint {
        return false;
    }
    let sig = Signature::from_bytes(&signed.signature);
    vk.verify_strict(&signed_message(&signed.root), &sig).is_ok()
}

/// Signed attestation file.
///
/// Layout: magic `TCAT`, u8 mode, u16 version, u8 hash algorithm, u8
/// signature algorithm, u8 section count, the category sections as
/// length-prefixed blobs, then the signed root (root, signature, key
/// fingerprint).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Container {
    pub mode: Mode,
    pub sections: Vec<Vec<u8>>,
    pub signed: SignedRoot,
}

impl Container {
    pub fn new(record: &AttestationRecord, signed: SignedRoot) -> Self {
        Self { mode: record.mode(), sections: record.sections().to_vec(), signed }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(CONTAINER_MAGIC).u8(self.mode.code()).u16(FORMAT_VERSION).u8(HASH_SHA256).u8(SIG_ED25519);
        w.u8(self.sections.len() as u8);
        for s in &self.sections {
            w.blob(s);
        }
        w.bytes(&self.signed.to_bytes());
        w.finish()
    }

    /// Parses the envelope only; sections are not interpreted.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "attestation container");
        r.expect_magic(CONTAINER_MAGIC)?;
        let mode = Mode::from_code(r.u8()?).ok_or_else(|| r.err("unknown mode"))?;
        let version = r.u16()?;
        if version != FORMAT_VERSION {
            return Err(r.err(format!("unsupported version {version}")));
        }
        if r.u8()? != HASH_SHA256 || r.u8()? != SIG_ED25519 {
            return Err(r.err("unsupported algorithm identifiers"));
        }
        let count = r.u8()? as usize;
        if count != mode.category_count() {
            return Err(r.err(format!("{} sections in {} mode", count, mode.name())));
        }
        let sections = (0..count).map(|_| r.blob().map(<[u8]>::to_vec)).collect::<Result<Vec<_>>>()?;
        let signed = SignedRoot::decode(&mut r)?;
        r.finish()?;
        Ok(Self { mode, sections, signed })
    }

    /// Rebuilds the record from the sections.
    pub fn record(&self) -> Result<AttestationRecord> {
        let record = AttestationRecord::from_sections(self.sections.clone())?;
        if record.mode() != self.mode {
            return Err(Error::malformed("attestation container", "envelope and meta disagree on mode"));
        }
        Ok(record)
    }
}
