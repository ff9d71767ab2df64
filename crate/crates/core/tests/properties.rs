mod common;

use std::sync::OnceLock;

use common::{RunSpec, Scenario};
use proptest::prelude::*;
use traincert::attest::{disclose, AttestationRecord, Container, DisclosureBundle, Meta};
use traincert::detnet::ModelState;
use traincert::merkle::AuditPath;
use traincert::run::TrainingRun;
use traincert::verify::{verify_transitions, AuditPlan};

struct Fixture {
    s: Scenario,
    complete: Vec<u8>,
    partial: Container,
    bundle: Vec<u8>,
    plan: AuditPlan,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let s = RunSpec { layers: vec![2, 4, 2], steps: 12, every: 3, items: 12, batch: 2, ..RunSpec::small() }.build();
        let complete = s.seal(&s.complete_record()).to_bytes();
        let rec = s.partial_record();
        let partial = s.seal(&rec);
        let plan = AuditPlan::from_indices(s.m(), vec![1, 3]).unwrap();
        let bundle = disclose(&rec, &s.data, &plan.sampled).unwrap().to_bytes();
        Fixture { s, complete, partial, bundle, plan }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn decoders_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..512)) {
        let _ = Container::from_bytes(&bytes);
        let _ = DisclosureBundle::from_bytes(&bytes);
        let _ = ModelState::from_bytes(&bytes);
        let _ = AuditPath::from_bytes(&bytes);
        let _ = Meta::from_bytes(&bytes);
        let _ = TrainingRun::from_bytes(&bytes);
        let _ = AttestationRecord::from_sections(vec![bytes.clone(); 5]);
    }

    #[test]
    fn any_bit_flip_in_a_complete_container_is_rejected(bit in 0usize..usize::MAX) {
        let f = fixture();
        let mut bytes = f.complete.clone();
        let bit = bit % (bytes.len() * 8);
        common::flip_bit(&mut bytes, bit);
        if let Ok(c) = Container::from_bytes(&bytes) {
            let r = f.s.verify_complete(&c, &f.s.data, &f.s.run.final_state.to_bytes());
            prop_assert!(!r.passed(), "bit {bit} went unnoticed");
        }
    }

    #[test]
    fn any_bit_flip_in_a_bundle_is_rejected(bit in 0usize..usize::MAX) {
        let f = fixture();
        let mut bytes = f.bundle.clone();
        let bit = bit % (bytes.len() * 8);
        common::flip_bit(&mut bytes, bit);
        if let Ok(b) = DisclosureBundle::from_bytes(&bytes) {
            let r = verify_transitions(&f.partial.signed, &f.plan, &b, &f.s.pk());
            prop_assert!(!r.passed(), "bit {bit} went unnoticed");
        }
    }

    #[test]
    fn garbage_bundles_are_rejected_without_panicking(
        entries in proptest::collection::vec(
            (proptest::collection::vec(0u64..8, 0..3), proptest::collection::vec(any::<u8>(), 0..64)),
            0..12,
        )
    ) {
        let f = fixture();
        let mut b = DisclosureBundle::default();
        for (path, leaf) in entries {
            b.push(path, leaf, AuditPath { leaf_index: 0, levels: Vec::new() });
        }
        let r = verify_transitions(&f.partial.signed, &f.plan, &b, &f.s.pk());
        prop_assert!(!r.passed());
    }
}

#[test]
fn every_record_leaf_opens_to_the_root() {
    let f = fixture();
    for rec in [f.s.complete_record(), f.s.partial_record()] {
        for (cat, leaf, path) in rec.all_leaves().unwrap() {
            assert!(traincert::merkle::verify_path(&leaf, &path, &rec.root()), "category {cat}");
        }
    }
}

#[test]
fn every_single_bit_flip_is_rejected() {
    use rayon::prelude::*;
    let f = fixture();
    let final_bytes = f.s.run.final_state.to_bytes();
    (0..f.complete.len() * 8).into_par_iter().for_each(|bit| {
        let mut bytes = f.complete.clone();
        common::flip_bit(&mut bytes, bit);
        if let Ok(c) = Container::from_bytes(&bytes) {
            assert!(!f.s.verify_complete(&c, &f.s.data, &final_bytes).passed(), "container bit {bit}");
        }
    });
    (0..f.bundle.len() * 8).into_par_iter().for_each(|bit| {
        let mut bytes = f.bundle.clone();
        common::flip_bit(&mut bytes, bit);
        if let Ok(b) = DisclosureBundle::from_bytes(&bytes) {
            assert!(!verify_transitions(&f.partial.signed, &f.plan, &b, &f.s.pk()).passed(), "bundle bit {bit}");
        }
    });
}
