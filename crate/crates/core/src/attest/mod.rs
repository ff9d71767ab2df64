//! Attestation records: the hash tree over everything that determines a
//! training run, its signed root, and the on-disk containers.
//!
//! Categories, each hashed into its own subtree with root `h_c`:
//!
//! 1. meta data (format, algorithms, k, m, n, d, b, arity, leaf counts)
//! 2. network set-up ([`ArchSpec::encode_setup`])
//! 3. trainer: loss, optimiser, seeds, regularisation, hyperparameters
//! 4. dataset manifest: leaf 0 is u64 d, leaf i is `u64 i || SHA-256(D_i)`
//! 5. complete mode: the batch schedule (16-byte header leaf, then one leaf
//!    per index). Partial mode: a binary tree over one top hash per
//!    checkpoint, `h_5j = SHA-256(0x01 || u64 i_j || h_b || h_c || h_d)`
//!    where `b` is the model state, `c` the indices of the following
//!    transition and `d` the auxiliary bytes.
//! 6. complete mode only: initial model state (8-byte header leaf, then one
//!    leaf per 4-byte word)
//!
//! `h_root = SHA-256(0x01 || h_1 || ... || h_last)`. Categories 1-3 are single
//! leaves. Empty byte strings hash as the one-byte sentinel leaf `0xEE`.

mod container;
mod disclosure;
mod keys;
mod storage;

pub use container::{sign_record, sign_root, verify_signature, Container, SignedRoot, CONTAINER_MAGIC, ROOT_CONTEXT};
pub use disclosure::{disclose, CheckpointOpening, DisclosureBundle, DisclosureEntry, BUNDLE_MAGIC};
pub use keys::{
    decode_public_key, decode_secret_key, encode_public_key, encode_secret_key, generate_signing_key, key_fingerprint,
    SigningKey, VerifyingKey,
};
pub use storage::{estimate_storage, StorageEstimate};

use sha2::{Digest as _, Sha256};

use crate::codec::{Reader, Writer};
use crate::dataset::{encode_indices, BatchSchedule, DatasetManifest, MANIFEST_ENTRY_LEN};
use crate::detnet::{ModelState, TrainConfig};
use crate::merkle::{AuditPath, Digest, MerkleTree, PathLevel, NODE_TAG};
use crate::{Error, Result};

pub const FORMAT_VERSION: u16 = 1;
pub const HASH_SHA256: u8 = 1;
pub const SIG_ED25519: u8 = 1;
/// Fan-in of the bulk subtrees (manifest, indices, weights).
pub const DEFAULT_ARITY: usize = 16;
/// The checkpoint-level tree is binary.
pub const CHECKPOINT_ARITY: usize = 2;
pub const EMPTY_SENTINEL: u8 = 0xEE;

pub const CAT_META: u8 = 1;
pub const CAT_SETUP: u8 = 2;
pub const CAT_TRAINER: u8 = 3;
pub const CAT_MANIFEST: u8 = 4;
pub const CAT_TRAINING: u8 = 5;
pub const CAT_INITIAL: u8 = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    Complete,
    Partial,
}

impl Mode {
    pub fn code(self) -> u8 {
        match self {
            Mode::Complete => 0,
            Mode::Partial => 1,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Mode::Complete),
            1 => Some(Mode::Partial),
            _ => None,
        }
    }

    pub fn category_count(self) -> usize {
        match self {
            Mode::Complete => 6,
            Mode::Partial => 5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Complete => "complete",
            Mode::Partial => "partial",
        }
    }
}

/// Category-1 contents.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Meta {
    pub version: u16,
    pub hash_alg: u8,
    pub sig_alg: u8,
    pub mode: Mode,
    /// Total training steps k.
    pub steps: u64,
    /// Number of checkpoint transitions m (0 in complete mode).
    pub transitions: u64,
    pub params: u64,
    pub items: u64,
    pub batch_size: u64,
    pub arity: u16,
    /// Leaf counts of categories 4, 5 and 6 (0 when absent).
    pub leaf_counts: [u64; 3],
}

impl Meta {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u16(self.version).u8(self.hash_alg).u8(self.sig_alg).u8(self.mode.code());
        w.u64(self.steps).u64(self.transitions).u64(self.params).u64(self.items).u64(self.batch_size);
        w.u16(self.arity);
        for c in self.leaf_counts {
            w.u64(c);
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "meta category");
        let version = r.u16()?;
        if version != FORMAT_VERSION {
            return Err(r.err(format!("unsupported format version {version}")));
        }
        let hash_alg = r.u8()?;
        let sig_alg = r.u8()?;
        if hash_alg != HASH_SHA256 || sig_alg != SIG_ED25519 {
            return Err(r.err("unsupported algorithm identifiers"));
        }
        let mode = Mode::from_code(r.u8()?).ok_or_else(|| r.err("unknown mode"))?;
        let meta = Self {
            version,
            hash_alg,
            sig_alg,
            mode,
            steps: r.u64()?,
            transitions: r.u64()?,
            params: r.u64()?,
            items: r.u64()?,
            batch_size: r.u64()?,
            arity: r.u16()?,
            leaf_counts: [r.u64()?, r.u64()?, r.u64()?],
        };
        r.finish()?;
        if !(2..=crate::merkle::MAX_ARITY as u16).contains(&meta.arity) {
            return Err(Error::malformed("meta category", format!("arity {}", meta.arity)));
        }
        Ok(meta)
    }
}

/// Splits `bytes` into a `head`-byte first leaf and `width`-byte leaves
/// (the last may be shorter). Never fails; empty input is the sentinel.
pub fn split_leaves(bytes: &[u8], head: usize, width: usize) -> Vec<&[u8]> {
    if bytes.is_empty() {
        return vec![std::slice::from_ref(&EMPTY_SENTINEL)];
    }
    let head = head.min(bytes.len());
    let mut out = Vec::with_capacity(1 + (bytes.len() - head) / width.max(1));
    if head > 0 {
        out.push(&bytes[..head]);
    }
    out.extend(bytes[head..].chunks(width));
    out
}

pub fn state_leaves(bytes: &[u8]) -> Vec<&[u8]> {
    split_leaves(bytes, 8, 4)
}

pub fn manifest_leaves(bytes: &[u8]) -> Vec<&[u8]> {
    split_leaves(bytes, 8, MANIFEST_ENTRY_LEN)
}

pub fn schedule_leaves(bytes: &[u8]) -> Vec<&[u8]> {
    split_leaves(bytes, 16, 8)
}

pub fn index_slice_leaves(bytes: &[u8]) -> Vec<&[u8]> {
    split_leaves(bytes, 0, 8)
}

pub fn single_leaf(bytes: &[u8]) -> Vec<&[u8]> {
    split_leaves(bytes, bytes.len(), 1)
}

/// One checkpoint `(i_j, f_{i_j}, I_{i_j})` together with the index slice
/// of the transition that starts at it (empty for the last checkpoint).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CheckpointData {
    pub step: u64,
    pub state: Vec<u8>,
    pub indices: Vec<u8>,
    pub aux: Vec<u8>,
}

impl CheckpointData {
    pub fn encode(&self, w: &mut Writer) {
        w.u64(self.step).blob(&self.state).blob(&self.indices).blob(&self.aux);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.encode(&mut w);
        w.finish()
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self> {
        Ok(Self { step: r.u64()?, state: r.blob()?.to_vec(), indices: r.blob()?.to_vec(), aux: r.blob()?.to_vec() })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "checkpoint");
        let c = Self::decode(&mut r)?;
        r.finish()?;
        Ok(c)
    }

    /// Subtree roots `(h_b, h_c, h_d)` and the checkpoint top hash.
    pub fn hashes(&self, arity: usize) -> (MerkleTree, MerkleTree, MerkleTree, Digest) {
        let b = MerkleTree::build(&state_leaves(&self.state), arity).expect("non-empty leaves");
        let c = MerkleTree::build(&index_slice_leaves(&self.indices), arity).expect("non-empty leaves");
        let d = MerkleTree::build(&single_leaf(&self.aux), arity).expect("non-empty leaves");
        let top = checkpoint_top(self.step, &b.root(), &c.root(), &d.root());
        (b, c, d, top)
    }
}

/// `SHA-256(0x01 || u64 step || h_b || h_c || h_d)`
pub fn checkpoint_top(step: u64, hb: &Digest, hc: &Digest, hd: &Digest) -> Digest {
    let mut h = Sha256::new();
    h.update([NODE_TAG]);
    h.update(step.to_le_bytes());
    h.update(hb.0);
    h.update(hc.0);
    h.update(hd.0);
    Digest(h.finalize().into())
}

pub fn decode_checkpoints(section: &[u8]) -> Result<Vec<CheckpointData>> {
    let mut r = Reader::new(section, "checkpoint category");
    let count = r.count(32)?;
    let cps = (0..count).map(|_| CheckpointData::decode(&mut r)).collect::<Result<Vec<_>>>()?;
    r.finish()?;
    if cps.is_empty() {
        return Err(Error::malformed("checkpoint category", "no checkpoints"));
    }
    Ok(cps)
}

pub fn encode_checkpoints(cps: &[CheckpointData]) -> Vec<u8> {
    let mut w = Writer::new();
    w.u64(cps.len() as u64);
    for c in cps {
        c.encode(&mut w);
    }
    w.finish()
}

/// Checkpoint handed to [`build_partial_record`]: step count, canonical
/// model state bytes, auxiliary bytes (may be empty).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Checkpoint {
    pub step: u64,
    pub state: Vec<u8>,
    pub aux: Vec<u8>,
}

/// Hash tree over a full set of category sections.
#[derive(Clone, Debug)]
pub struct AttestationRecord {
    meta: Meta,
    sections: Vec<Vec<u8>>,
    subtrees: Vec<MerkleTree>,
    checkpoint_tops: Vec<Digest>,
    root: Digest,
}

impl AttestationRecord {
    /// Rebuilds every tree from raw category bytes. Fails only when the
    /// sections are structurally unusable (wrong count, unparsable meta or
    /// checkpoint list); content is never validated here.
    pub fn from_sections(sections: Vec<Vec<u8>>) -> Result<Self> {
        let meta = Meta::from_bytes(sections.first().ok_or_else(|| Error::malformed("record", "no sections"))?)?;
        if sections.len() != meta.mode.category_count() {
            return Err(Error::malformed(
                "record",
                format!(
                    "{} mode needs {} sections, got {}",
                    meta.mode.name(),
                    meta.mode.category_count(),
                    sections.len()
                ),
            ));
        }
        let arity = meta.arity as usize;
        let mut subtrees = Vec::with_capacity(sections.len());
        let mut checkpoint_tops = Vec::new();
        for (i, bytes) in sections.iter().enumerate() {
            let cat = i as u8 + 1;
            let tree = match (cat, meta.mode) {
                (CAT_META | CAT_SETUP | CAT_TRAINER, _) => MerkleTree::build(&single_leaf(bytes), arity)?,
                (CAT_MANIFEST, _) => MerkleTree::build(&manifest_leaves(bytes), arity)?,
                (CAT_TRAINING, Mode::Complete) => MerkleTree::build(&schedule_leaves(bytes), arity)?,
                (CAT_TRAINING, Mode::Partial) => {
                    checkpoint_tops = decode_checkpoints(bytes)?.iter().map(|c| c.hashes(arity).3).collect();
                    MerkleTree::build(&checkpoint_tops.iter().map(|d| d.0).collect::<Vec<_>>(), CHECKPOINT_ARITY)?
                }
                _ => MerkleTree::build(&state_leaves(bytes), arity)?,
            };
            subtrees.push(tree);
        }
        let root = crate::merkle::node_digest(subtrees.iter().map(|t| t.root()).collect::<Vec<_>>().iter());
        Ok(Self { meta, sections, subtrees, checkpoint_tops, root })
    }

    pub fn root(&self) -> Digest {
        self.root
    }

    pub fn mode(&self) -> Mode {
        self.meta.mode
    }

    pub fn meta(&self) -> &Meta {
        &self.meta
    }

    pub fn sections(&self) -> &[Vec<u8>] {
        &self.sections
    }

    pub fn into_sections(self) -> Vec<Vec<u8>> {
        self.sections
    }

    pub fn section(&self, category: u8) -> Option<&[u8]> {
        self.sections.get((category as usize).checked_sub(1)?).map(Vec::as_slice)
    }

    /// `h_1, ..., h_last`.
    pub fn category_roots(&self) -> Vec<Digest> {
        self.subtrees.iter().map(MerkleTree::root).collect()
    }

    pub fn subtree(&self, category: u8) -> Option<&MerkleTree> {
        self.subtrees.get((category as usize).checked_sub(1)?)
    }

    /// `h_{5,i_j}` for every checkpoint (partial mode).
    pub fn checkpoint_tops(&self) -> &[Digest] {
        &self.checkpoint_tops
    }

    /// The level joining the category roots into `h_root`, seen from `category`.
    pub fn top_level(&self, category: u8) -> Result<AuditPath> {
        let roots = self.category_roots();
        let pos = (category as usize)
            .checked_sub(1)
            .filter(|p| *p < roots.len())
            .ok_or_else(|| Error::InvalidInput(format!("no category {category}")))?;
        let siblings = roots.iter().enumerate().filter(|(i, _)| *i != pos).map(|(_, d)| *d).collect();
        Ok(AuditPath { leaf_index: 0, levels: vec![PathLevel { position: pos as u8, siblings }] })
    }

    /// Path from leaf `leaf_index` of a category subtree up to `h_root`.
    pub fn category_path(&self, category: u8, leaf_index: usize) -> Result<AuditPath> {
        let tree = self.subtree(category).ok_or_else(|| Error::InvalidInput(format!("no category {category}")))?;
        Ok(tree.audit_path(leaf_index)?.extend(&self.top_level(category)?))
    }

    pub fn checkpoints(&self) -> Result<Vec<CheckpointData>> {
        if self.mode() != Mode::Partial {
            return Err(Error::InvalidInput("complete records have no checkpoints".into()));
        }
        decode_checkpoints(&self.sections[CAT_TRAINING as usize - 1])
    }

    pub fn checkpoint_path(&self, position: usize) -> Result<AuditPath> {
        if self.mode() != Mode::Partial {
            return Err(Error::InvalidInput("complete records have no checkpoints".into()));
        }
        self.category_path(CAT_TRAINING, position)
    }

    pub fn config(&self) -> Result<TrainConfig> {
        TrainConfig::decode(&self.sections[CAT_SETUP as usize - 1], &self.sections[CAT_TRAINER as usize - 1])
    }

    pub fn manifest(&self) -> Result<DatasetManifest> {
        DatasetManifest::from_bytes(&self.sections[CAT_MANIFEST as usize - 1])
    }

    pub fn schedule(&self) -> Result<BatchSchedule> {
        if self.mode() != Mode::Complete {
            return Err(Error::InvalidInput("partial records carry per-transition indices".into()));
        }
        BatchSchedule::from_bytes(&self.sections[CAT_TRAINING as usize - 1])
    }

    pub fn initial_state(&self) -> Result<ModelState> {
        if self.mode() != Mode::Complete {
            return Err(Error::InvalidInput("partial records keep f_0 in checkpoint 0".into()));
        }
        ModelState::from_bytes(&self.sections[CAT_INITIAL as usize - 1])
    }

    /// Every leaf with its path to the root, for exhaustive checks.
    pub fn all_leaves(&self) -> Result<Vec<(u8, Vec<u8>, AuditPath)>> {
        let mut out = Vec::new();
        for cat in 1..=self.sections.len() as u8 {
            let bytes = &self.sections[cat as usize - 1];
            let leaves: Vec<Vec<u8>> = match (cat, self.mode()) {
                (CAT_META | CAT_SETUP | CAT_TRAINER, _) => single_leaf(bytes).iter().map(|l| l.to_vec()).collect(),
                (CAT_MANIFEST, _) => manifest_leaves(bytes).iter().map(|l| l.to_vec()).collect(),
                (CAT_TRAINING, Mode::Complete) => schedule_leaves(bytes).iter().map(|l| l.to_vec()).collect(),
                (CAT_TRAINING, Mode::Partial) => self.checkpoint_tops.iter().map(|d| d.0.to_vec()).collect(),
                _ => state_leaves(bytes).iter().map(|l| l.to_vec()).collect(),
            };
            for (i, leaf) in leaves.into_iter().enumerate() {
                out.push((cat, leaf, self.category_path(cat, i)?));
            }
        }
        Ok(out)
    }
}

fn check_common(config: &TrainConfig, manifest: &DatasetManifest, schedule: &BatchSchedule) -> Result<()> {
    config.validate().map_err(|e| Error::inconsistent("trainer", e.to_string()))?;
    if schedule.batch_size() != config.batch_size {
        return Err(Error::inconsistent(
            "indices",
            format!("schedule batch size {} vs configured {}", schedule.batch_size(), config.batch_size),
        ));
    }
    schedule.check_range(manifest.d()).map_err(|e| Error::inconsistent("indices", e.to_string()))
}

fn check_state(config: &TrainConfig, state: &ModelState, step: u64, category: &'static str) -> Result<()> {
    let n = config.arch.param_count();
    if state.param_count() != n {
        return Err(Error::inconsistent(category, format!("{} parameters, set-up has {n}", state.param_count())));
    }
    if state.opt.kind() != config.optimizer.kind() {
        return Err(Error::inconsistent(category, "optimizer state does not match trainer"));
    }
    if state.step_index != step {
        return Err(Error::inconsistent(category, format!("state is at step {}, expected {step}", state.step_index)));
    }
    Ok(())
}

fn meta_for(
    mode: Mode,
    config: &TrainConfig,
    manifest: &DatasetManifest,
    steps: u64,
    transitions: u64,
    arity: usize,
    leaf_counts: [u64; 3],
) -> Meta {
    Meta {
        version: FORMAT_VERSION,
        hash_alg: HASH_SHA256,
        sig_alg: SIG_ED25519,
        mode,
        steps,
        transitions,
        params: config.arch.param_count() as u64,
        items: manifest.d(),
        batch_size: config.batch_size as u64,
        arity: arity as u16,
        leaf_counts,
    }
}

fn check_arity(arity: usize) -> Result<()> {
    if !(2..=crate::merkle::MAX_ARITY).contains(&arity) {
        return Err(Error::InvalidInput(format!("arity {arity}")));
    }
    Ok(())
}

pub fn build_complete_record(
    config: &TrainConfig,
    manifest: &DatasetManifest,
    schedule: &BatchSchedule,
    initial: &ModelState,
) -> Result<AttestationRecord> {
    build_complete_record_with_arity(config, manifest, schedule, initial, DEFAULT_ARITY)
}

pub fn build_complete_record_with_arity(
    config: &TrainConfig,
    manifest: &DatasetManifest,
    schedule: &BatchSchedule,
    initial: &ModelState,
    arity: usize,
) -> Result<AttestationRecord> {
    check_arity(arity)?;
    check_common(config, manifest, schedule)?;
    check_state(config, initial, 0, "initial weights")?;
    let manifest_bytes = manifest.to_bytes();
    let schedule_bytes = schedule.to_bytes();
    let initial_bytes = initial.to_bytes();
    let counts = [
        manifest_leaves(&manifest_bytes).len() as u64,
        schedule_leaves(&schedule_bytes).len() as u64,
        state_leaves(&initial_bytes).len() as u64,
    ];
    let meta = meta_for(Mode::Complete, config, manifest, schedule.steps(), 0, arity, counts);
    AttestationRecord::from_sections(vec![
        meta.to_bytes(),
        config.arch.encode_setup(),
        config.encode_trainer(),
        manifest_bytes,
        schedule_bytes,
        initial_bytes,
    ])
}

pub fn build_partial_record(
    config: &TrainConfig,
    manifest: &DatasetManifest,
    schedule: &BatchSchedule,
    checkpoints: &[Checkpoint],
) -> Result<AttestationRecord> {
    build_partial_record_with_arity(config, manifest, schedule, checkpoints, DEFAULT_ARITY)
}

pub fn build_partial_record_with_arity(
    config: &TrainConfig,
    manifest: &DatasetManifest,
    schedule: &BatchSchedule,
    checkpoints: &[Checkpoint],
    arity: usize,
) -> Result<AttestationRecord> {
    check_arity(arity)?;
    check_common(config, manifest, schedule)?;
    if checkpoints.len() < 2 {
        return Err(Error::inconsistent("checkpoints", "need at least f_0 and f_k"));
    }
    if checkpoints[0].step != 0 {
        return Err(Error::inconsistent("checkpoints", "first checkpoint must be at step 0"));
    }
    if let Some(w) = checkpoints.windows(2).find(|w| w[1].step <= w[0].step) {
        return Err(Error::inconsistent(
            "checkpoints",
            format!("steps {} then {} are not increasing", w[0].step, w[1].step),
        ));
    }
    let k = schedule.steps();
    if checkpoints.last().unwrap().step != k {
        return Err(Error::inconsistent("checkpoints", format!("last checkpoint must be at step k = {k}")));
    }
    let mut data = Vec::with_capacity(checkpoints.len());
    for (j, cp) in checkpoints.iter().enumerate() {
        let state = ModelState::from_bytes(&cp.state).map_err(|e| Error::inconsistent("checkpoints", e.to_string()))?;
        check_state(config, &state, cp.step, "checkpoints")?;
        let indices = match checkpoints.get(j + 1) {
            Some(next) => encode_indices(schedule.steps_slice(cp.step, next.step)),
            None => Vec::new(),
        };
        data.push(CheckpointData { step: cp.step, state: cp.state.clone(), indices, aux: cp.aux.clone() });
    }
    let manifest_bytes = manifest.to_bytes();
    let counts = [manifest_leaves(&manifest_bytes).len() as u64, data.len() as u64, 0];
    let meta = meta_for(Mode::Partial, config, manifest, k, data.len() as u64 - 1, arity, counts);
    AttestationRecord::from_sections(vec![
        meta.to_bytes(),
        config.arch.encode_setup(),
        config.encode_trainer(),
        manifest_bytes,
        encode_checkpoints(&data),
    ])
}

#[cfg(test)]
mod tests;
