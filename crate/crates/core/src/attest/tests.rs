use super::*;
use crate::dataset::{batch_schedule, build_manifest, synthetic_xor, Dataset};
use crate::detnet::{Activation, ArchSpec, Loss, Optimizer, OptimizerKind};
use crate::merkle::verify_path;

fn config() -> TrainConfig {
    TrainConfig {
        arch: ArchSpec::mlp(&[2, 3, 2], Activation::Relu, Loss::SoftmaxCrossEntropy),
        optimizer: Optimizer::Sgd { lr: 0.1 },
        batch_size: 4,
        init_seed: 7,
        shuffle_seed: 9,
        init_scale: 0.5,
        l2: 0.0,
    }
}

struct Fixture {
    config: TrainConfig,
    data: Dataset,
    manifest: DatasetManifest,
    schedule: BatchSchedule,
    initial: ModelState,
}

fn fixture(k: u64) -> Fixture {
    let config = config();
    let data = Dataset::from_examples(&synthetic_xor(16, 3));
    let manifest = build_manifest(data.payloads()).unwrap();
    let schedule = batch_schedule(config.shuffle_seed, 16, 4, k).unwrap();
    let initial = ModelState::initial(&config).unwrap();
    Fixture { config, data, manifest, schedule, initial }
}

fn fake_checkpoints(f: &Fixture, steps: &[u64]) -> Vec<Checkpoint> {
    steps
        .iter()
        .map(|&s| {
            let mut st = f.initial.clone();
            st.step_index = s;
            st.weights[0] += s as f32;
            Checkpoint { step: s, state: st.to_bytes(), aux: s.to_le_bytes().to_vec() }
        })
        .collect()
}

#[test]
fn complete_record_is_deterministic_and_recombines() {
    let f = fixture(6);
    let a = build_complete_record(&f.config, &f.manifest, &f.schedule, &f.initial).unwrap();
    let b = build_complete_record(&f.config, &f.manifest, &f.schedule, &f.initial).unwrap();
    assert_eq!(a.root(), b.root());
    assert_eq!(a.sections(), b.sections());
    assert_eq!(a.category_roots().len(), 6);
    assert_eq!(a.root(), crate::merkle::node_digest(a.category_roots().iter()));
    assert_eq!(a.meta().leaf_counts, [17, 25, 1 + 17 + 2]);
}

#[test]
fn schedule_change_changes_root_only_through_category_five() {
    let f = fixture(6);
    let a = build_complete_record(&f.config, &f.manifest, &f.schedule, &f.initial).unwrap();
    let mut s = f.schedule.clone();
    s.indices_mut()[5] = s.indices()[5] % 16 + 1;
    let b = build_complete_record(&f.config, &f.manifest, &s, &f.initial).unwrap();
    assert_ne!(a.root(), b.root());
    let (ra, rb) = (a.category_roots(), b.category_roots());
    for c in 0..6 {
        assert_eq!(ra[c] == rb[c], c != 4, "category {}", c + 1);
    }
}

#[test]
fn every_leaf_has_a_valid_path() {
    let f = fixture(5);
    let cps = fake_checkpoints(&f, &[0, 2, 5]);
    for record in [
        build_complete_record(&f.config, &f.manifest, &f.schedule, &f.initial).unwrap(),
        build_partial_record(&f.config, &f.manifest, &f.schedule, &cps).unwrap(),
        build_complete_record_with_arity(&f.config, &f.manifest, &f.schedule, &f.initial, 3).unwrap(),
    ] {
        let leaves = record.all_leaves().unwrap();
        assert!(!leaves.is_empty());
        for (cat, leaf, path) in leaves {
            assert!(verify_path(&leaf, &path, &record.root()), "category {cat}");
        }
    }
}

#[test]
fn partial_and_complete_share_categories_one_to_four_except_meta() {
    let f = fixture(4);
    let c = build_complete_record(&f.config, &f.manifest, &f.schedule, &f.initial).unwrap();
    let cps = fake_checkpoints(&f, &[0, 4]);
    let p = build_partial_record(&f.config, &f.manifest, &f.schedule, &cps).unwrap();
    let (rc, rp) = (c.category_roots(), p.category_roots());
    assert_eq!(rc[1..4], rp[1..4]);
    assert_eq!(p.category_roots().len(), 5);
    assert_eq!(p.subtree(CAT_TRAINING).unwrap().leaf_count(), 2);
}

#[test]
fn checkpoint_mutation_moves_only_its_own_hashes() {
    let f = fixture(6);
    let cps = fake_checkpoints(&f, &[0, 3, 6]);
    let a = build_partial_record(&f.config, &f.manifest, &f.schedule, &cps).unwrap();
    let mut cps2 = cps.clone();
    let mut st = ModelState::from_bytes(&cps2[1].state).unwrap();
    st.weights[2] = -st.weights[2];
    cps2[1].state = st.to_bytes();
    let b = build_partial_record(&f.config, &f.manifest, &f.schedule, &cps2).unwrap();
    assert_ne!(a.root(), b.root());
    let (ta, tb) = (a.checkpoint_tops(), b.checkpoint_tops());
    assert_eq!((ta[0] == tb[0], ta[1] == tb[1], ta[2] == tb[2]), (true, false, true));
    let (ra, rb) = (a.category_roots(), b.category_roots());
    for c in 0..5 {
        assert_eq!(ra[c] == rb[c], c != 4);
    }
}

#[test]
fn last_checkpoint_uses_empty_sentinel() {
    let f = fixture(2);
    let cps = fake_checkpoints(&f, &[0, 2]);
    let p = build_partial_record(&f.config, &f.manifest, &f.schedule, &cps).unwrap();
    let data = p.checkpoints().unwrap();
    assert_eq!(data[0].indices.len(), 2 * 4 * 8);
    assert!(data[1].indices.is_empty());
    let (_, c, _, _) = data[1].hashes(DEFAULT_ARITY);
    assert_eq!(c.root(), crate::merkle::leaf_digest(&[EMPTY_SENTINEL]));
}

#[test]
fn rejects_inconsistent_inputs() {
    let f = fixture(4);
    let bad_steps = [vec![0, 3, 2, 4], vec![1, 4], vec![0, 3], vec![0]];
    for steps in bad_steps {
        let cps = fake_checkpoints(&f, &steps);
        let err = build_partial_record(&f.config, &f.manifest, &f.schedule, &cps).unwrap_err();
        assert!(matches!(err, Error::Inconsistent { category: "checkpoints", .. }), "{steps:?}: {err}");
    }
    let mut s = f.schedule.clone();
    s.indices_mut()[0] = 17;
    let err = build_complete_record(&f.config, &f.manifest, &s, &f.initial).unwrap_err();
    assert!(matches!(err, Error::Inconsistent { category: "indices", .. }));
    let mut st = f.initial.clone();
    st.step_index = 1;
    let err = build_complete_record(&f.config, &f.manifest, &f.schedule, &st).unwrap_err();
    assert!(matches!(err, Error::Inconsistent { category: "initial weights", .. }));
    let other = ModelState {
        opt: crate::detnet::OptState::zeroed(OptimizerKind::Adam, f.initial.param_count()),
        ..f.initial.clone()
    };
    let err = build_complete_record(&f.config, &f.manifest, &f.schedule, &other).unwrap_err();
    assert!(matches!(err, Error::Inconsistent { .. }));
}

#[test]
fn container_round_trip_and_signature() {
    let f = fixture(3);
    let record = build_complete_record(&f.config, &f.manifest, &f.schedule, &f.initial).unwrap();
    let key = SigningKey::from_bytes(&[7; 32]);
    let signed = sign_record(&record, &key);
    let pk = key.verifying_key().to_bytes();
    assert!(verify_signature(&signed, &pk));
    let other = SigningKey::from_bytes(&[8; 32]).verifying_key().to_bytes();
    assert!(!verify_signature(&signed, &other));
    assert!(!verify_signature(&signed, &pk[..31]));
    let mut moved = signed.clone();
    moved.root.0[0] ^= 1;
    assert!(!verify_signature(&moved, &pk));
    let mut bad_sig = signed.clone();
    bad_sig.signature = [0xFF; 64];
    assert!(!verify_signature(&bad_sig, &pk));

    let c = Container::new(&record, signed);
    let bytes = c.to_bytes();
    let back = Container::from_bytes(&bytes).unwrap();
    assert_eq!(back, c);
    assert_eq!(back.record().unwrap().root(), record.root());
    for cut in [0, 4, 10, bytes.len() - 1] {
        assert!(Container::from_bytes(&bytes[..cut]).is_err());
    }
}

#[test]
fn key_armour_round_trip() {
    let key = generate_signing_key();
    let text = encode_secret_key(&key);
    assert_eq!(decode_secret_key(&text).unwrap().to_bytes(), key.to_bytes());
    let pub_text = encode_public_key(&key.verifying_key());
    assert_eq!(decode_public_key(&pub_text).unwrap(), key.verifying_key().to_bytes());
    assert!(decode_public_key(&text).is_err());
    assert!(decode_secret_key("garbage").is_err());
}

#[test]
fn disclosure_bundle_covers_sampled_transitions() {
    let f = fixture(6);
    let cps = fake_checkpoints(&f, &[0, 2, 4, 6]);
    let p = build_partial_record(&f.config, &f.manifest, &f.schedule, &cps).unwrap();
    let bundle = disclose(&p, &f.data, &[1]).unwrap();
    let back = DisclosureBundle::from_bytes(&bundle.to_bytes()).unwrap();
    assert_eq!(back, bundle);
    assert!(bundle.checkpoint(0).is_none());
    let c1 = bundle.checkpoint(1).unwrap().unwrap();
    let c2 = bundle.checkpoint(2).unwrap().unwrap();
    assert_eq!((c1.data.step, c2.data.step), (2, 4));
    let (_, _, _, top) = c1.data.hashes(DEFAULT_ARITY);
    assert!(verify_path(&top.0, &c1.path, &p.root()));
    for i in crate::dataset::decode_indices(&c1.data.indices) {
        assert!(bundle.item(i).is_some());
        let leaf = bundle.category_leaf(CAT_MANIFEST, i).unwrap();
        assert!(verify_path(&leaf.leaf, &leaf.path, &p.root()));
    }
    assert!(disclose(&p, &f.data, &[3]).is_err());
}

#[test]
fn storage_estimates() {
    let n = 1u64 << 27;
    let sgd = estimate_storage(n, 1, 16, OptimizerKind::Sgd, 4, 32).unwrap();
    assert_eq!(sgd.per_checkpoint_bytes, 1 << 29);
    assert_eq!(sgd.penultimate_level_bytes, 1 << 28);
    let gb = 1u64 << 30;
    for m in [0, 1, 10] {
        assert_eq!(estimate_storage(n, m, 16, OptimizerKind::Sgd, 4, 32).unwrap().total_bound_bytes, m * gb);
        assert_eq!(estimate_storage(n, m, 16, OptimizerKind::Adam, 4, 32).unwrap().total_bound_bytes, 2 * m * gb);
    }
    let a2 = estimate_storage(1 << 20, 1, 2, OptimizerKind::Sgd, 4, 32).unwrap().tree_bytes as f64;
    let a4 = estimate_storage(1 << 20, 1, 4, OptimizerKind::Sgd, 4, 32).unwrap().tree_bytes as f64;
    assert!((a2 / a4 - 3.0).abs() < 0.01);
    assert!(estimate_storage(n, 1, 1, OptimizerKind::Sgd, 4, 32).is_err());
}
