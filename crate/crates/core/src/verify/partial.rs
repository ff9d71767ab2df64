use std::collections::BTreeSet;

use super::{replay_matches, AuditPlan, Failure, FailureCode, VerificationReport};
use crate::attest::{
    verify_signature, CheckpointOpening, DisclosureBundle, Meta, Mode, SignedRoot, CAT_MANIFEST, CAT_META, CAT_SETUP,
    CAT_TRAINER, CAT_TRAINING, CHECKPOINT_ARITY,
};
use crate::dataset::{decode_indices, DatasetManifest};
use crate::detnet::{ModelState, TrainConfig};
use crate::merkle::{sha256, verify_path, AuditPath, Digest};

const PARTIAL_CATEGORIES: usize = 5;

/// Levels above the leaves of a tree with `leaves` leaves.
fn tree_height(mut leaves: u64, arity: u64) -> usize {
    let mut h = 0;
    while leaves > 1 {
        leaves = leaves.div_ceil(arity);
        h += 1;
    }
    h
}

/// Where an opening claims to sit: category, leaf index and the shape of
/// the category subtree.
struct Slot {
    category: u8,
    leaf: u64,
    height: usize,
    arity: u64,
}

/// The path must have exactly the subtree's height plus the top level, its
/// positions must spell out `slot.leaf`, and it must hash to `root`.
fn opens_at(leaf: &[u8], path: &AuditPath, slot: &Slot, root: &Digest) -> bool {
    let Some(top) = path.levels.last() else {
        return false;
    };
    path.levels.len() == slot.height + 1
        && path.leaf_index == slot.leaf
        && path.index_for_arity(slot.arity as usize, slot.height) == Some(slot.leaf)
        && top.position as usize == slot.category as usize - 1
        && top.siblings.len() == PARTIAL_CATEGORIES - 1
        && verify_path(leaf, path, root)
}

struct Header {
    meta: Meta,
    config: TrainConfig,
}

/// Partial verification: signature, categories 1-4 membership, then for
/// every sampled transition `j -> j+1` in ascending order (a) checkpoint
/// membership, (b) item hashes and (c) replay.
///
/// Only the signed root is taken from the attestation; everything else
/// comes from the bundle.
pub fn verify_transitions(
    signed: &SignedRoot,
    plan: &AuditPlan,
    bundle: &DisclosureBundle,
    public_key: &[u8],
) -> VerificationReport {
    let mut report = VerificationReport::new(Mode::Partial);
    report.verifier_seed = Some(plan.verifier_seed);
    report.sampled = plan.sampled.clone();

    let sig = if verify_signature(signed, public_key) {
        Ok(format!("root {} signed by key {}", signed.root, signed.key_fingerprint))
    } else {
        Err(Failure::new(FailureCode::SignatureInvalid, "signature does not verify under the trusted key"))
    };
    if !report.record("1", "signature", None, sig) {
        return report;
    }

    let header = match check_header(&signed.root, plan, bundle) {
        Ok(h) => h,
        Err(f) => {
            report.record("2", "membership", None, Err(f));
            return report;
        }
    };
    report.record("2", "membership", None, Ok("categories 1-4 open to the signed root".into()));

    let root = signed.root;
    let m = header.meta.transitions;
    let cp_slot = |j: u64| Slot {
        category: CAT_TRAINING,
        leaf: j,
        height: tree_height(m + 1, CHECKPOINT_ARITY as u64),
        arity: CHECKPOINT_ARITY as u64,
    };
    for &j in &plan.sampled {
        let openings = check_checkpoints(&root, &header, bundle, j, &cp_slot);
        let (from, to) = match openings {
            Ok(pair) => {
                report.record(
                    "3a",
                    "checkpoint membership",
                    Some(j),
                    Ok(format!("f_{} and f_{} open", pair.0.data.step, pair.1.data.step)),
                );
                pair
            }
            Err(f) => {
                report.record("3a", "checkpoint membership", Some(j), Err(f));
                return report;
            }
        };
        let items = check_items(&root, &header, bundle, &from);
        let items = items.map(|n| format!("{n} items match the manifest"));
        if !report.record("3b", "data hashes", Some(j), items) {
            return report;
        }
        if !report.record("3c", "replay", Some(j), check_replay(&header, bundle, &from, &to)) {
            return report;
        }
    }
    report
}

fn check_header(root: &Digest, plan: &AuditPlan, bundle: &DisclosureBundle) -> Result<Header, Failure> {
    let member = |d: String| Failure::new(FailureCode::MembershipFail, d);
    let open = |cat: u8, leaf: u64, height: usize, arity: u64| -> Result<&[u8], Failure> {
        let e = bundle.category_leaf(cat, leaf).ok_or_else(|| {
            Failure::at(FailureCode::IncompleteDisclosure, leaf, format!("bundle lacks leaf {leaf} of category {cat}"))
        })?;
        if !opens_at(&e.leaf, &e.path, &Slot { category: cat, leaf, height, arity }, root) {
            return Err(Failure::at(
                FailureCode::MembershipFail,
                leaf,
                format!("leaf {leaf} of category {cat} does not open to the signed root"),
            ));
        }
        Ok(&e.leaf)
    };

    let meta = Meta::from_bytes(open(CAT_META, 0, 0, 2)?).map_err(|e| member(e.to_string()))?;
    if meta.mode != Mode::Partial {
        return Err(member("meta declares a complete-mode record".into()));
    }
    let arity = meta.arity as u64;
    let config = TrainConfig::decode(open(CAT_SETUP, 0, 0, arity)?, open(CAT_TRAINER, 0, 0, arity)?)
        .map_err(|e| member(e.to_string()))?;
    let head = open(CAT_MANIFEST, 0, tree_height(meta.leaf_counts[0], arity), arity)?;
    let d =
        <[u8; 8]>::try_from(head).map(u64::from_le_bytes).map_err(|_| member("manifest header is not a u64".into()))?;
    let declared = [
        ("d", meta.items, d),
        ("n", meta.params, config.arch.param_count() as u64),
        ("b", meta.batch_size, config.batch_size as u64),
        ("manifest leaves", meta.leaf_counts[0], d.saturating_add(1)),
        ("checkpoint leaves", meta.leaf_counts[1], meta.transitions.saturating_add(1)),
    ];
    if let Some((name, want, got)) = declared.iter().find(|(_, a, b)| a != b) {
        return Err(member(format!("meta declares {name} = {want}, record has {got}")));
    }
    if meta.transitions == 0 {
        return Err(member("record declares no transitions".into()));
    }
    if plan.m != meta.transitions {
        return Err(Failure::new(
            FailureCode::IncompleteDisclosure,
            format!("plan covers m = {}, record has m = {}", plan.m, meta.transitions),
        ));
    }
    Ok(Header { meta, config })
}

fn check_checkpoints(
    root: &Digest,
    header: &Header,
    bundle: &DisclosureBundle,
    j: u64,
    slot: &dyn Fn(u64) -> Slot,
) -> Result<(CheckpointOpening, CheckpointOpening), Failure> {
    let arity = header.meta.arity as usize;
    let open = |p: u64| -> Result<CheckpointOpening, Failure> {
        let c = bundle
            .checkpoint(p)
            .ok_or_else(|| Failure::at(FailureCode::IncompleteDisclosure, p, format!("bundle lacks checkpoint {p}")))?;
        let c = c.map_err(|e| Failure::at(FailureCode::MembershipFail, p, format!("checkpoint {p}: {e}")))?;
        let top = c.data.hashes(arity).3;
        if !opens_at(&top.0, &c.path, &slot(p), root) {
            return Err(Failure::at(
                FailureCode::MembershipFail,
                p,
                format!("checkpoint {p} does not open to the signed root"),
            ));
        }
        Ok(c)
    };
    Ok((open(j)?, open(j + 1)?))
}

fn check_items(
    root: &Digest,
    header: &Header,
    bundle: &DisclosureBundle,
    from: &CheckpointOpening,
) -> Result<usize, Failure> {
    let d = header.meta.items;
    let arity = header.meta.arity as u64;
    let height = tree_height(header.meta.leaf_counts[0], arity);
    let indices = decode_indices(&from.data.indices);
    let distinct: BTreeSet<u64> = indices.iter().copied().collect();
    let count = distinct.len();
    for i in distinct {
        if i == 0 || i > d {
            return Err(Failure::at(FailureCode::DataHashMismatch, i, format!("index {i} outside 1..={d}")));
        }
        let entry = bundle.category_leaf(CAT_MANIFEST, i).ok_or_else(|| {
            Failure::at(FailureCode::IncompleteDisclosure, i, format!("bundle lacks manifest entry {i}"))
        })?;
        let slot = Slot { category: CAT_MANIFEST, leaf: i, height, arity };
        let digest = match DatasetManifest::decode_entry(&entry.leaf) {
            Some((idx, digest)) if idx == i && opens_at(&entry.leaf, &entry.path, &slot, root) => digest,
            _ => {
                return Err(Failure::at(
                    FailureCode::MembershipFail,
                    i,
                    format!("manifest entry {i} does not open to the signed root"),
                ))
            }
        };
        let payload = bundle
            .item(i)
            .ok_or_else(|| Failure::at(FailureCode::IncompleteDisclosure, i, format!("bundle lacks item {i}")))?;
        if sha256(payload) != digest {
            return Err(Failure::at(
                FailureCode::DataHashMismatch,
                i,
                format!("item {i} does not hash to its manifest entry"),
            ));
        }
    }
    Ok(count)
}

fn check_replay(
    header: &Header,
    bundle: &DisclosureBundle,
    from: &CheckpointOpening,
    to: &CheckpointOpening,
) -> Result<String, Failure> {
    let replay = |d: String| Failure::new(FailureCode::ReplayMismatch, d);
    let (s0, s1) = (from.data.step, to.data.step);
    let m = header.meta.transitions;
    if s1 <= s0 {
        return Err(replay(format!("checkpoint steps {s0} -> {s1} do not increase")));
    }
    if from.position == 0 && s0 != 0 {
        return Err(replay(format!("first checkpoint is at step {s0}, not 0")));
    }
    if to.position == m && s1 != header.meta.steps {
        return Err(replay(format!("last checkpoint is at step {s1}, not k = {}", header.meta.steps)));
    }
    let b = header.config.batch_size as u64;
    let want = (s1 - s0).checked_mul(b).and_then(|n| n.checked_mul(8));
    if want != Some(from.data.indices.len() as u64) {
        return Err(replay(format!(
            "{} index bytes recorded for {} steps of batch {b}",
            from.data.indices.len(),
            s1 - s0
        )));
    }
    let start = ModelState::from_bytes(&from.data.state).map_err(|e| replay(format!("checkpoint state: {e}")))?;
    if start.step_index != s0 {
        return Err(replay(format!("checkpoint state is at step {}, recorded i_j = {s0}", start.step_index)));
    }
    let indices = decode_indices(&from.data.indices);
    let batches: Vec<Vec<&[u8]>> = indices
        .chunks(b as usize)
        .map(|row| row.iter().map(|&i| bundle.item(i).unwrap_or_default()).collect())
        .collect();
    replay_matches(&header.config, &start, &batches, &to.data.state)
}
