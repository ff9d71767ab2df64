//! Disclosure bundles: the openings a prover hands over for an audit.
//!
//! Every entry is `(category path, leaf bytes, audit path)`:
//!
//! * `[c, l]` for leaf `l` of category `c` (1-4); the audit path runs to `h_root`
//! * `[5, j]` for checkpoint `j` in partial mode; the leaf bytes are the
//!   checkpoint encoding (step, state, indices, aux) and the audit path runs
//!   from `h_{5,i_j}` to `h_root`
//! * `[0, i]` for the payload of training item `i`; its path is empty, the
//!   payload is checked against the disclosed manifest leaf instead

use std::collections::BTreeSet;

use super::{AttestationRecord, CheckpointData, Mode, CAT_MANIFEST, CAT_META, CAT_SETUP, CAT_TRAINER, CAT_TRAINING};
use crate::codec::{Reader, Writer};
use crate::dataset::{decode_indices, DataStore};
use crate::merkle::AuditPath;
use crate::{Error, Result};

pub const BUNDLE_MAGIC: &[u8; 4] = b"TCDB";
const BUNDLE_VERSION: u16 = 1;
const ITEM_CATEGORY: u64 = 0;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DisclosureEntry {
    pub category_path: Vec<u64>,
    pub leaf: Vec<u8>,
    pub path: AuditPath,
}

/// A decoded `[5, j]` entry.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CheckpointOpening {
    pub position: u64,
    pub data: CheckpointData,
    pub path: AuditPath,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DisclosureBundle {
    pub entries: Vec<DisclosureEntry>,
}

impl DisclosureBundle {
    pub fn push(&mut self, category_path: Vec<u64>, leaf: Vec<u8>, path: AuditPath) {
        self.entries.push(DisclosureEntry { category_path, leaf, path });
    }

    /// First opening of leaf `leaf` in category `category`.
    pub fn category_leaf(&self, category: u8, leaf: u64) -> Option<&DisclosureEntry> {
        self.entries.iter().find(|e| e.category_path == [category as u64, leaf])
    }

    /// First opening of checkpoint `position`; `Err` if its bytes do not parse.
    pub fn checkpoint(&self, position: u64) -> Option<Result<CheckpointOpening>> {
        let e = self.entries.iter().find(|e| e.category_path == [CAT_TRAINING as u64, position])?;
        Some(CheckpointData::from_bytes(&e.leaf).map(|data| CheckpointOpening { position, data, path: e.path.clone() }))
    }

    /// Payload of item `index`. Only the canonical form counts: an empty
    /// audit path whose leaf index is the item index.
    pub fn item(&self, index: u64) -> Option<&[u8]> {
        self.entries
            .iter()
            .find(|e| e.category_path == [ITEM_CATEGORY, index])
            .filter(|e| e.path.levels.is_empty() && e.path.leaf_index == index)
            .map(|e| e.leaf.as_slice())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(BUNDLE_MAGIC).u16(BUNDLE_VERSION).u64(self.entries.len() as u64);
        for e in &self.entries {
            w.u8(e.category_path.len() as u8);
            for &c in &e.category_path {
                w.u64(c);
            }
            w.blob(&e.leaf);
            e.path.encode(&mut w);
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "disclosure bundle");
        r.expect_magic(BUNDLE_MAGIC)?;
        if r.u16()? != BUNDLE_VERSION {
            return Err(r.err("unsupported version"));
        }
        let count = r.count(1 + 8 + 16)?;
        let mut entries = Vec::with_capacity(count);
        for _ in 0..count {
            let depth = r.u8()? as usize;
            let category_path = (0..depth).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
            let leaf = r.blob()?.to_vec();
            let path = AuditPath::decode(&mut r)?;
            entries.push(DisclosureEntry { category_path, leaf, path });
        }
        r.finish()?;
        Ok(Self { entries })
    }
}

/// Openings for the sampled transitions `j -> j+1` of a partial record:
/// categories 1-3, the manifest header, both checkpoints of every sampled
/// transition, and the payload and manifest leaf of every item they use.
pub fn disclose(record: &AttestationRecord, data: &dyn DataStore, transitions: &[u64]) -> Result<DisclosureBundle> {
    if record.mode() != Mode::Partial {
        return Err(Error::InvalidInput("disclosure bundles are for partial records".into()));
    }
    let checkpoints = record.checkpoints()?;
    let m = checkpoints.len() as u64 - 1;
    let mut bundle = DisclosureBundle::default();
    for cat in [CAT_META, CAT_SETUP, CAT_TRAINER, CAT_MANIFEST] {
        let bytes = record.section(cat).unwrap_or_default();
        let leaves = if cat == CAT_MANIFEST { super::manifest_leaves(bytes) } else { super::single_leaf(bytes) };
        bundle.push(vec![cat as u64, 0], leaves[0].to_vec(), record.category_path(cat, 0)?);
    }
    let mut positions = BTreeSet::new();
    for &j in transitions {
        if j >= m {
            return Err(Error::InvalidInput(format!("transition {j} outside 0..{m}")));
        }
        positions.extend([j, j + 1]);
    }
    let mut items = BTreeSet::new();
    for &p in &positions {
        let cp = &checkpoints[p as usize];
        bundle.push(vec![CAT_TRAINING as u64, p], cp.to_bytes(), record.checkpoint_path(p as usize)?);
    }
    for &j in transitions {
        items.extend(decode_indices(&checkpoints[j as usize].indices));
    }
    let manifest_bytes = record.section(CAT_MANIFEST).unwrap_or_default();
    let manifest_leaves = super::manifest_leaves(manifest_bytes);
    for &i in &items {
        let payload = data.item(i).ok_or(Error::IndexOutOfRange { index: i, d: data.item_count() })?;
        let leaf =
            manifest_leaves.get(i as usize).ok_or(Error::IndexOutOfRange { index: i, d: record.meta().items })?;
        bundle.push(vec![CAT_MANIFEST as u64, i], leaf.to_vec(), record.category_path(CAT_MANIFEST, i as usize)?);
        bundle.push(vec![ITEM_CATEGORY, i], payload.to_vec(), AuditPath { leaf_index: i, levels: Vec::new() });
    }
    Ok(bundle)
}
