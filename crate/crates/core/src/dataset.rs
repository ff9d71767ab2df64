//! Training items, the index-to-digest manifest and the batch schedule.

use crate::codec::{Reader, Writer};
use crate::detnet::{Example, PrngState};
use crate::merkle::{sha256, Digest};
use crate::{Error, Result};

pub const DATASET_MAGIC: &[u8; 4] = b"TCDS";

/// Canonical payload of one item: u64 input dim, inputs as binary32, u64
/// target dim, targets as binary32. Little-endian throughout.
pub fn encode_payload(ex: &Example) -> Vec<u8> {
    let mut w = Writer::with_capacity(16 + 4 * (ex.input.len() + ex.target.len()));
    w.u64(ex.input.len() as u64).f32s(&ex.input);
    w.u64(ex.target.len() as u64).f32s(&ex.target);
    w.finish()
}

pub fn decode_payload(bytes: &[u8]) -> Result<Example> {
    let mut r = Reader::new(bytes, "data item");
    let n = r.count(4)?;
    let input = r.f32s(n)?;
    let m = r.count(4)?;
    let target = r.f32s(m)?;
    r.finish()?;
    Ok(Example { input, target })
}

/// Source of item payloads by 1-based index.
pub trait DataStore {
    fn item_count(&self) -> u64;
    fn item(&self, index: u64) -> Option<&[u8]>;
}

/// Ordered training set; item `i` lives at position `i - 1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    payloads: Vec<Vec<u8>>,
}

impl Dataset {
    pub fn new(payloads: Vec<Vec<u8>>) -> Self {
        Self { payloads }
    }

    pub fn from_examples(examples: &[Example]) -> Self {
        Self { payloads: examples.iter().map(encode_payload).collect() }
    }

    pub fn payloads(&self) -> &[Vec<u8>] {
        &self.payloads
    }

    pub fn payload_mut(&mut self, index: u64) -> Option<&mut Vec<u8>> {
        let i = usize::try_from(index).ok()?.checked_sub(1)?;
        self.payloads.get_mut(i)
    }

    pub fn len(&self) -> usize {
        self.payloads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.payloads.is_empty()
    }

    /// Dataset file: magic `TCDS`, u64 d, then d length-prefixed payloads.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(DATASET_MAGIC).u64(self.payloads.len() as u64);
        for p in &self.payloads {
            w.blob(p);
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "dataset file");
        r.expect_magic(DATASET_MAGIC)?;
        let d = r.count(8)?;
        let payloads = (0..d).map(|_| r.blob().map(<[u8]>::to_vec)).collect::<Result<_>>()?;
        r.finish()?;
        Ok(Self { payloads })
    }
}

impl DataStore for Dataset {
    fn item_count(&self) -> u64 {
        self.payloads.len() as u64
    }

    fn item(&self, index: u64) -> Option<&[u8]> {
        let i = usize::try_from(index).ok()?.checked_sub(1)?;
        self.payloads.get(i).map(Vec::as_slice)
    }
}

/// The numbering map as digests: entry `i` is SHA-256 of payload `i`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetManifest {
    digests: Vec<Digest>,
}

/// Size of one encoded manifest entry: u64 index then the digest.
pub const MANIFEST_ENTRY_LEN: usize = 8 + Digest::LEN;

impl DatasetManifest {
    pub fn d(&self) -> u64 {
        self.digests.len() as u64
    }

    pub fn digest(&self, index: u64) -> Option<&Digest> {
        let i = usize::try_from(index).ok()?.checked_sub(1)?;
        self.digests.get(i)
    }

    pub fn entries(&self) -> impl Iterator<Item = (u64, &Digest)> {
        self.digests.iter().enumerate().map(|(i, d)| (i as u64 + 1, d))
    }

    pub fn encode_entry(index: u64, digest: &Digest) -> [u8; MANIFEST_ENTRY_LEN] {
        let mut out = [0u8; MANIFEST_ENTRY_LEN];
        out[..8].copy_from_slice(&index.to_le_bytes());
        out[8..].copy_from_slice(&digest.0);
        out
    }

    pub fn decode_entry(bytes: &[u8]) -> Option<(u64, Digest)> {
        if bytes.len() != MANIFEST_ENTRY_LEN {
            return None;
        }
        let index = u64::from_le_bytes(bytes[..8].try_into().ok()?);
        Some((index, Digest(bytes[8..].try_into().ok()?)))
    }

    /// u64 d, then `(u64 i, digest)` for i = 1..=d.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::with_capacity(8 + self.digests.len() * MANIFEST_ENTRY_LEN);
        w.u64(self.d());
        for (i, d) in self.entries() {
            w.bytes(&Self::encode_entry(i, d));
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "manifest");
        let d = r.count(MANIFEST_ENTRY_LEN)?;
        if d == 0 {
            return Err(r.err("empty manifest"));
        }
        let mut digests = Vec::with_capacity(d);
        for expect in 1..=d as u64 {
            let (i, dg) = Self::decode_entry(r.take(MANIFEST_ENTRY_LEN)?).expect("fixed-size entry");
            if i != expect {
                return Err(r.err(format!("entry {expect} carries index {i}")));
            }
            digests.push(dg);
        }
        r.finish()?;
        Ok(Self { digests })
    }
}

pub fn build_manifest<P: AsRef<[u8]>>(items: &[P]) -> Result<DatasetManifest> {
    if items.is_empty() {
        return Err(Error::InvalidInput("dataset must contain at least one item".into()));
    }
    Ok(DatasetManifest { digests: items.iter().map(|p| sha256(p.as_ref())).collect() })
}

/// Indices whose disclosed payload does not hash to the manifest entry, in
/// the order disclosed.
pub fn verify_item_hashes(manifest: &DatasetManifest, disclosed: &[(u64, &[u8])]) -> Result<Vec<u64>> {
    let mut bad = Vec::new();
    for &(i, payload) in disclosed {
        let want = manifest.digest(i).ok_or(Error::IndexOutOfRange { index: i, d: manifest.d() })?;
        if &sha256(payload) != want {
            bad.push(i);
        }
    }
    Ok(bad)
}

/// Item indices of a training run: row `t` holds the `b` indices of step `t`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BatchSchedule {
    batch_size: usize,
    indices: Vec<u64>,
}

impl BatchSchedule {
    pub fn from_indices(batch_size: usize, indices: Vec<u64>) -> Result<Self> {
        if batch_size == 0 || indices.len() % batch_size != 0 {
            return Err(Error::InvalidInput(format!("{} indices do not form rows of {batch_size}", indices.len())));
        }
        Ok(Self { batch_size, indices })
    }

    pub fn steps(&self) -> u64 {
        (self.indices.len() / self.batch_size) as u64
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn indices(&self) -> &[u64] {
        &self.indices
    }

    pub fn indices_mut(&mut self) -> &mut [u64] {
        &mut self.indices
    }

    pub fn row(&self, t: u64) -> &[u64] {
        let t = t as usize;
        &self.indices[t * self.batch_size..(t + 1) * self.batch_size]
    }

    /// Indices of steps `from..to`.
    pub fn steps_slice(&self, from: u64, to: u64) -> &[u64] {
        &self.indices[from as usize * self.batch_size..to as usize * self.batch_size]
    }

    /// u64 k, u64 b, then the k*b indices as u64.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::with_capacity(16 + 8 * self.indices.len());
        w.u64(self.steps()).u64(self.batch_size as u64);
        for &i in &self.indices {
            w.u64(i);
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "schedule");
        let k = r.u64()?;
        let b = r.u64()?;
        let total = k.checked_mul(b).filter(|t| *t as u128 * 8 <= r.remaining() as u128);
        let total = total.ok_or_else(|| r.err("index count exceeds section"))? as usize;
        let b = usize::try_from(b).map_err(|_| r.err("batch size overflow"))?;
        let indices = decode_indices(r.take(total * 8)?);
        r.finish()?;
        Self::from_indices(b, indices)
    }

    pub fn check_range(&self, d: u64) -> Result<()> {
        match self.indices.iter().find(|&&i| i == 0 || i > d) {
            Some(&index) => Err(Error::IndexOutOfRange { index, d }),
            None => Ok(()),
        }
    }
}

pub fn encode_indices(indices: &[u64]) -> Vec<u8> {
    indices.iter().flat_map(|i| i.to_le_bytes()).collect()
}

/// Inverse of [`encode_indices`]; a trailing partial word is ignored.
pub fn decode_indices(bytes: &[u8]) -> Vec<u64> {
    bytes.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect()
}

/// Shuffle-stream generator state at absolute stream position `position`
/// (position `t * b` is the first index of step `t`).
///
/// Every epoch is one Fisher-Yates pass consuming exactly `d - 1` draws, so
/// the generator at the start of epoch `e` is the seed advanced by
/// `e * (d - 1)` draws.
pub fn stream_state_at(shuffle_seed: u64, d: u64, position: u64) -> PrngState {
    let mut g = PrngState::new(shuffle_seed);
    g.advance((position / d).wrapping_mul(d - 1));
    g
}

/// Permutation of 1..=d drawn by Fisher-Yates from `rng`.
fn epoch_permutation(rng: &mut PrngState, d: u64) -> Vec<u64> {
    let mut perm: Vec<u64> = (1..=d).collect();
    for i in (1..d as usize).rev() {
        let j = rng.below(i as u64 + 1) as usize;
        perm.swap(i, j);
    }
    perm
}

/// `k` batches of `b` indices. The index stream is the concatenation of
/// successive epoch permutations, consumed `b` at a time; when `b` does not
/// divide `d`, a batch straddles two epochs.
pub fn batch_schedule(shuffle_seed: u64, d: u64, b: u64, k: u64) -> Result<BatchSchedule> {
    if d == 0 || b == 0 {
        return Err(Error::InvalidInput("d and b must be positive".into()));
    }
    if b > d {
        return Err(Error::InvalidInput(format!("batch size {b} exceeds dataset size {d}")));
    }
    let total = k
        .checked_mul(b)
        .and_then(|t| usize::try_from(t).ok())
        .ok_or_else(|| Error::InvalidInput("schedule too large".into()))?;
    let mut rng = PrngState::new(shuffle_seed);
    let mut indices = Vec::with_capacity(total);
    while indices.len() < total {
        let perm = epoch_permutation(&mut rng, d);
        let need = (total - indices.len()).min(perm.len());
        indices.extend_from_slice(&perm[..need]);
    }
    BatchSchedule::from_indices(b as usize, indices)
}

/// Two-feature classification set: inputs uniform in [-1, 1]^2, target
/// one-hot `[1, 0]` when both coordinates share a sign, `[0, 1]` otherwise.
pub fn synthetic_xor(d: usize, seed: u64) -> Vec<Example> {
    let mut rng = PrngState::new(seed);
    (0..d)
        .map(|_| {
            let x = rng.next_unit_f32() * 2.0 - 1.0;
            let y = rng.next_unit_f32() * 2.0 - 1.0;
            let same = (x >= 0.0) == (y >= 0.0);
            Example { input: vec![x, y], target: if same { vec![1.0, 0.0] } else { vec![0.0, 1.0] } }
        })
        .collect()
}
