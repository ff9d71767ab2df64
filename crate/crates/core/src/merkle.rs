//! Hash trees of configurable arity with audit paths.
//!
//! Leaf digest: `SHA-256(0x00 || leaf)`. Internal digest:
//! `SHA-256(0x01 || child_1 || ... || child_c)` over the `c <= r` children in
//! order. The last node of a level may have fewer than `r` children; nothing
//! is padded. A level of size `s` has a parent level of size `ceil(s / r)`.

use std::fmt;

use sha2::{Digest as _, Sha256};

use crate::codec::{Reader, Writer};
use crate::{Error, Result};

pub const LEAF_TAG: u8 = 0x00;
pub const NODE_TAG: u8 = 0x01;
/// Largest arity representable in the audit path wire form.
pub const MAX_ARITY: usize = 256;

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub const LEN: usize = 32;

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        let v = hex::decode(s.trim()).ok()?;
        Some(Digest(v.try_into().ok()?))
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.to_hex())
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

pub fn sha256(data: &[u8]) -> Digest {
    Digest(Sha256::digest(data).into())
}

pub fn leaf_digest(leaf: &[u8]) -> Digest {
    let mut h = Sha256::new();
    h.update([LEAF_TAG]);
    h.update(leaf);
    Digest(h.finalize().into())
}

pub fn node_digest<'a>(children: impl IntoIterator<Item = &'a Digest>) -> Digest {
    let mut h = Sha256::new();
    h.update([NODE_TAG]);
    for c in children {
        h.update(c.0);
    }
    Digest(h.finalize().into())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MerkleTree {
    arity: usize,
    /// `levels[0]` are the leaf digests, the last level holds the root alone.
    levels: Vec<Vec<Digest>>,
}

fn check_arity(arity: usize) -> Result<()> {
    if !(2..=MAX_ARITY).contains(&arity) {
        return Err(Error::InvalidInput(format!("arity {arity} outside 2..={MAX_ARITY}")));
    }
    Ok(())
}

impl MerkleTree {
    pub fn build<L: AsRef<[u8]>>(leaves: &[L], arity: usize) -> Result<Self> {
        check_arity(arity)?;
        if leaves.is_empty() {
            return Err(Error::InvalidInput("hash tree needs at least one leaf".into()));
        }
        Ok(Self::from_leaf_digests(leaves.iter().map(|l| leaf_digest(l.as_ref())).collect(), arity))
    }

    fn from_leaf_digests(first: Vec<Digest>, arity: usize) -> Self {
        let mut levels = vec![first];
        while levels.last().unwrap().len() > 1 {
            let next = levels.last().unwrap().chunks(arity).map(node_digest).collect();
            levels.push(next);
        }
        Self { arity, levels }
    }

    pub fn root(&self) -> Digest {
        self.levels.last().unwrap()[0]
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn leaf_count(&self) -> usize {
        self.levels[0].len()
    }

    /// Number of levels above the leaves.
    pub fn height(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn levels(&self) -> &[Vec<Digest>] {
        &self.levels
    }

    pub fn audit_path(&self, leaf_index: usize) -> Result<AuditPath> {
        if leaf_index >= self.leaf_count() {
            return Err(Error::InvalidInput(format!(
                "leaf {leaf_index} out of range, tree has {} leaves",
                self.leaf_count()
            )));
        }
        let mut idx = leaf_index;
        let mut levels = Vec::with_capacity(self.height());
        for level in &self.levels[..self.height()] {
            let start = idx - idx % self.arity;
            let end = (start + self.arity).min(level.len());
            let position = idx - start;
            let siblings = (start..end).filter(|&j| j != idx).map(|j| level[j]).collect();
            levels.push(PathLevel { position: position as u8, siblings });
            idx /= self.arity;
        }
        Ok(AuditPath { leaf_index: leaf_index as u64, levels })
    }
}

pub fn build_tree<L: AsRef<[u8]>>(leaves: &[L], arity: usize) -> Result<MerkleTree> {
    MerkleTree::build(leaves, arity)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PathLevel {
    /// Position of the path node among its siblings.
    pub position: u8,
    pub siblings: Vec<Digest>,
}

/// Sibling groups from a leaf up to a root.
///
/// Wire form: u64 leaf_index, u64 level count, then per level u8 position,
/// u8 sibling count and the siblings as 32-byte digests.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AuditPath {
    pub leaf_index: u64,
    pub levels: Vec<PathLevel>,
}

impl AuditPath {
    /// Digest reached by hashing `start` (already a digest) up the path.
    pub fn fold_from(&self, start: Digest) -> Option<Digest> {
        let mut cur = start;
        for level in &self.levels {
            let pos = level.position as usize;
            if pos > level.siblings.len() {
                return None;
            }
            let mut h = Sha256::new();
            h.update([NODE_TAG]);
            for s in &level.siblings[..pos] {
                h.update(s.0);
            }
            h.update(cur.0);
            for s in &level.siblings[pos..] {
                h.update(s.0);
            }
            cur = Digest(h.finalize().into());
        }
        Some(cur)
    }

    /// Leaf index implied by the positions when the first `levels` levels
    /// belong to a tree of the given arity.
    pub fn index_for_arity(&self, arity: usize, levels: usize) -> Option<u64> {
        if levels > self.levels.len() {
            return None;
        }
        let mut idx: u64 = 0;
        let mut mul: u64 = 1;
        for level in &self.levels[..levels] {
            if level.position as usize >= arity || level.siblings.len() >= arity {
                return None;
            }
            idx = idx.checked_add((level.position as u64).checked_mul(mul)?)?;
            mul = mul.checked_mul(arity as u64)?;
        }
        Some(idx)
    }

    /// Appends the levels of `upper`, a path from this path's root onwards.
    pub fn extend(mut self, upper: &AuditPath) -> AuditPath {
        self.levels.extend(upper.levels.iter().cloned());
        self
    }

    pub fn encode(&self, w: &mut Writer) {
        w.u64(self.leaf_index).u64(self.levels.len() as u64);
        for level in &self.levels {
            w.u8(level.position).u8(level.siblings.len() as u8);
            for s in &level.siblings {
                w.bytes(&s.0);
            }
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.encode(&mut w);
        w.finish()
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self> {
        let leaf_index = r.u64()?;
        let count = r.count(2)?;
        let mut levels = Vec::with_capacity(count);
        for _ in 0..count {
            let position = r.u8()?;
            let n = r.u8()? as usize;
            let siblings = (0..n).map(|_| r.array::<32>().map(Digest)).collect::<Result<_>>()?;
            levels.push(PathLevel { position, siblings });
        }
        Ok(Self { leaf_index, levels })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "audit path");
        let p = Self::decode(&mut r)?;
        r.finish()?;
        Ok(p)
    }
}

/// True iff hashing `leaf` up `path` reproduces `root`.
pub fn verify_path(leaf: &[u8], path: &AuditPath, root: &Digest) -> bool {
    path.fold_from(leaf_digest(leaf)).is_some_and(|d| &d == root)
}

/// Number of internal nodes of a tree with `leaf_count` leaves.
pub fn node_count(leaf_count: u64, arity: u64) -> u64 {
    assert!(arity >= 2, "arity must be at least 2");
    let mut level = leaf_count;
    let mut total = 0;
    while level > 1 {
        level = level.div_ceil(arity);
        total += level;
    }
    total
}
