use super::{replay_matches, Failure, FailureCode, VerificationReport};
use crate::attest::{verify_signature, AttestationRecord, Container, Mode};
use crate::dataset::{BatchSchedule, DataStore, DatasetManifest};
use crate::detnet::{ModelState, TrainConfig};
use crate::merkle::sha256;

struct Contents {
    config: TrainConfig,
    manifest: DatasetManifest,
    schedule: BatchSchedule,
    initial: ModelState,
}

/// Checks 1-4 against the full record, the data store and the claimed
/// final model state (canonical [`ModelState`] bytes).
pub fn verify_complete(
    container: &Container,
    claimed_final: &[u8],
    data: &dyn DataStore,
    public_key: &[u8],
) -> VerificationReport {
    let mut report = VerificationReport::new(Mode::Complete);

    let sig = if verify_signature(&container.signed, public_key) {
        Ok(format!("root {} signed by key {}", container.signed.root, container.signed.key_fingerprint))
    } else {
        Err(Failure::new(FailureCode::SignatureInvalid, "signature does not verify under the trusted key"))
    };
    if !report.record("1", "signature", None, sig) {
        return report;
    }

    let contents = match check_tree(container) {
        Ok(c) => c,
        Err(f) => {
            report.record("2", "tree", None, Err(f));
            return report;
        }
    };
    report.record("2", "tree", None, Ok("all categories rehash to the signed root".into()));

    if !report.record("3", "data hashes", None, check_data(&contents, data)) {
        return report;
    }

    let batches: Vec<Vec<&[u8]>> = (0..contents.schedule.steps())
        .map(|t| contents.schedule.row(t).iter().map(|&i| data.item(i).unwrap_or_default()).collect())
        .collect();
    let replay = replay_matches(&contents.config, &contents.initial, &batches, claimed_final);
    report.record("4", "replay", None, replay);
    report
}

fn check_tree(container: &Container) -> Result<Contents, Failure> {
    let tree = |d: String| Failure::new(FailureCode::TreeMismatch, d);
    if container.mode != Mode::Complete {
        return Err(tree("container is not a complete-mode record".into()));
    }
    let record = container.record().map_err(|e| tree(e.to_string()))?;
    if record.root() != container.signed.root {
        return Err(tree(format!(
            "recomputed root {} differs from signed root {}",
            record.root(),
            container.signed.root
        )));
    }
    decode_contents(&record).map_err(tree)
}

fn decode_contents(record: &AttestationRecord) -> Result<Contents, String> {
    let config = record.config().map_err(|e| e.to_string())?;
    let manifest = record.manifest().map_err(|e| e.to_string())?;
    let schedule = record.schedule().map_err(|e| e.to_string())?;
    let initial = record.initial_state().map_err(|e| e.to_string())?;
    let meta = record.meta();
    let leaf_counts = [
        record.subtree(4).map_or(0, |t| t.leaf_count()) as u64,
        record.subtree(5).map_or(0, |t| t.leaf_count()) as u64,
        record.subtree(6).map_or(0, |t| t.leaf_count()) as u64,
    ];
    let declared = [
        ("k", meta.steps, schedule.steps()),
        ("m", meta.transitions, 0),
        ("n", meta.params, config.arch.param_count() as u64),
        ("d", meta.items, manifest.d()),
        ("b", meta.batch_size, config.batch_size as u64),
        ("schedule b", meta.batch_size, schedule.batch_size() as u64),
        ("manifest leaves", meta.leaf_counts[0], leaf_counts[0]),
        ("schedule leaves", meta.leaf_counts[1], leaf_counts[1]),
        ("weight leaves", meta.leaf_counts[2], leaf_counts[2]),
    ];
    if let Some((name, want, got)) = declared.iter().find(|(_, a, b)| a != b) {
        return Err(format!("meta declares {name} = {want}, record has {got}"));
    }
    Ok(Contents { config, manifest, schedule, initial })
}

fn check_data(c: &Contents, data: &dyn DataStore) -> Result<String, Failure> {
    let d = c.manifest.d();
    if data.item_count() != d {
        return Err(Failure::new(
            FailureCode::DataHashMismatch,
            format!("data store holds {} items, manifest lists {d}", data.item_count()),
        ));
    }
    for (i, want) in c.manifest.entries() {
        let payload = data
            .item(i)
            .ok_or_else(|| Failure::at(FailureCode::DataHashMismatch, i, format!("item {i} unavailable")))?;
        if &sha256(payload) != want {
            return Err(Failure::at(
                FailureCode::DataHashMismatch,
                i,
                format!("item {i} does not hash to its manifest entry"),
            ));
        }
    }
    if let Some(&i) = c.schedule.indices().iter().find(|&&i| i == 0 || i > d) {
        return Err(Failure::at(FailureCode::DataHashMismatch, i, format!("schedule uses index {i} outside 1..={d}")));
    }
    Ok(format!("{d} items match the manifest"))
}
