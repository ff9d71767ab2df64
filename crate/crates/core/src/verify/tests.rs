use super::*;
use crate::attest::{
    build_complete_record, build_partial_record, disclose, sign_record, Container, DisclosureBundle, SigningKey,
    CAT_MANIFEST, CAT_TRAINING,
};
use crate::dataset::{build_manifest, synthetic_xor, Dataset};
use crate::detnet::{Activation, ArchSpec, Loss, Optimizer};
use crate::run::{evenly_spaced, execute, TrainingRun};

fn config(optimizer: Optimizer) -> TrainConfig {
    TrainConfig {
        arch: ArchSpec::mlp(&[2, 4, 2], Activation::Relu, Loss::SoftmaxCrossEntropy),
        optimizer,
        batch_size: 3,
        init_seed: 11,
        shuffle_seed: 12,
        init_scale: 0.5,
        l2: 0.001,
    }
}

struct Setup {
    data: Dataset,
    run: TrainingRun,
    key: SigningKey,
}

fn setup(k: u64, m: u64) -> Setup {
    let data = Dataset::from_examples(&synthetic_xor(20, 5));
    let cfg = config(Optimizer::Adam { lr: 0.01, beta1: 0.9, beta2: 0.999, eps: 1e-8 });
    let run = execute(&cfg, &data, k, &evenly_spaced(k, m).unwrap()).unwrap();
    Setup { data, run, key: SigningKey::from_bytes(&[3; 32]) }
}

fn complete(s: &Setup) -> Container {
    let manifest = build_manifest(s.data.payloads()).unwrap();
    let rec = build_complete_record(&s.run.config, &manifest, &s.run.schedule, &s.run.initial).unwrap();
    Container::new(&rec, sign_record(&rec, &s.key))
}

fn partial(s: &Setup) -> (Container, crate::attest::AttestationRecord) {
    let manifest = build_manifest(s.data.payloads()).unwrap();
    let rec = build_partial_record(&s.run.config, &manifest, &s.run.schedule, &s.run.checkpoints).unwrap();
    (Container::new(&rec, sign_record(&rec, &s.key)), rec)
}

fn pk(s: &Setup) -> [u8; 32] {
    s.key.verifying_key().to_bytes()
}

#[test]
fn honest_complete_run_passes_all_four_checks() {
    let s = setup(14, 2);
    let c = complete(&s);
    let r = verify_complete(&c, &s.run.final_state.to_bytes(), &s.data, &pk(&s));
    assert!(r.passed(), "{}", r.render());
    assert_eq!(r.checks.iter().map(|c| c.id).collect::<Vec<_>>(), ["1", "2", "3", "4"]);
    assert_eq!(r.exit_code(), 0);
}

#[test]
fn complete_failures_stop_at_first_violated_check() {
    let s = setup(10, 2);
    let c = complete(&s);
    let fin = s.run.final_state.to_bytes();

    let other = SigningKey::from_bytes(&[4; 32]);
    let resigned = Container { signed: crate::attest::sign_root(c.signed.root, &other), ..c.clone() };
    let r = verify_complete(&resigned, &fin, &s.data, &pk(&s));
    assert_eq!(r.failure_code(), Some(FailureCode::SignatureInvalid));
    assert_eq!(r.checks.len(), 1);

    let mut tampered = c.clone();
    tampered.sections[4][20] ^= 1;
    let r = verify_complete(&tampered, &fin, &s.data, &pk(&s));
    assert_eq!(r.failure_code(), Some(FailureCode::TreeMismatch));
    assert_eq!(r.checks.len(), 2);

    let mut data = s.data.clone();
    data.payload_mut(7).unwrap()[10] ^= 0x10;
    let r = verify_complete(&c, &fin, &data, &pk(&s));
    let (check, failure) = r.failure().unwrap();
    assert_eq!((check.id, failure.code, failure.index), ("3", FailureCode::DataHashMismatch, Some(7)));

    let mut bad_final = s.run.final_state.clone();
    bad_final.weights[0] = f32::from_bits(bad_final.weights[0].to_bits() ^ 1);
    let r = verify_complete(&c, &bad_final.to_bytes(), &s.data, &pk(&s));
    assert_eq!(r.failure_code(), Some(FailureCode::ReplayMismatch));
    assert_eq!(r.checks.len(), 4);
}

#[test]
fn honest_partial_run_passes_for_every_plan() {
    let s = setup(12, 4);
    let (c, rec) = partial(&s);
    for v in 1..=4 {
        for seed in 0..5 {
            let plan = sample_transitions(4, v, seed).unwrap();
            let bundle = disclose(&rec, &s.data, &plan.sampled).unwrap();
            let bundle = DisclosureBundle::from_bytes(&bundle.to_bytes()).unwrap();
            let r = verify_transitions(&c.signed, &plan, &bundle, &pk(&s));
            assert!(r.passed(), "{}", r.render());
            assert_eq!(r.transitions.len(), v as usize);
        }
    }
}

#[test]
fn substituted_index_slice_fails_membership() {
    let s = setup(12, 4);
    let (c, rec) = partial(&s);
    let plan = AuditPlan::from_indices(4, vec![2]).unwrap();
    let mut bundle = disclose(&rec, &s.data, &plan.sampled).unwrap();
    let e = bundle.entries.iter_mut().find(|e| e.category_path == [CAT_TRAINING as u64, 2]).unwrap();
    let mut cp = crate::attest::CheckpointData::from_bytes(&e.leaf).unwrap();
    cp.indices[0] = if cp.indices[0] == 1 { 2 } else { 1 };
    e.leaf = cp.to_bytes();
    let r = verify_transitions(&c.signed, &plan, &bundle, &pk(&s));
    let (check, f) = r.failure().unwrap();
    assert_eq!((check.id, check.transition, f.code), ("3a", Some(2), FailureCode::MembershipFail));
}

#[test]
fn false_checkpoint_inside_signed_tree_fails_replay_on_adjacent_transitions() {
    let mut s = setup(12, 4);
    let mut st = ModelState::from_bytes(&s.run.checkpoints[2].state).unwrap();
    st.weights[3] = f32::from_bits(st.weights[3].to_bits() ^ 0x8000_0000);
    s.run.checkpoints[2].state = st.to_bytes();
    let (c, rec) = partial(&s);
    for (j, caught) in [(0, false), (1, true), (2, true), (3, false)] {
        let plan = AuditPlan::from_indices(4, vec![j]).unwrap();
        let bundle = disclose(&rec, &s.data, &plan.sampled).unwrap();
        let r = verify_transitions(&c.signed, &plan, &bundle, &pk(&s));
        assert_eq!(r.failure_code(), caught.then_some(FailureCode::ReplayMismatch), "j={j}");
    }
}

#[test]
fn missing_material_is_incomplete_disclosure() {
    let s = setup(12, 4);
    let (c, rec) = partial(&s);
    let plan = AuditPlan::from_indices(4, vec![1]).unwrap();
    let full = disclose(&rec, &s.data, &plan.sampled).unwrap();
    for drop in [vec![1u64, 0], vec![CAT_TRAINING as u64, 2], vec![CAT_MANIFEST as u64, 0]] {
        let mut b = full.clone();
        b.entries.retain(|e| e.category_path != drop);
        let r = verify_transitions(&c.signed, &plan, &b, &pk(&s));
        assert_eq!(r.failure_code(), Some(FailureCode::IncompleteDisclosure), "{drop:?}");
    }
    let item = full.entries.iter().find(|e| e.category_path[0] == 0).unwrap().category_path.clone();
    let mut b = full.clone();
    b.entries.retain(|e| e.category_path != item);
    let r = verify_transitions(&c.signed, &plan, &b, &pk(&s));
    assert_eq!(r.failure_code(), Some(FailureCode::IncompleteDisclosure));
    let other_plan = AuditPlan::from_indices(4, vec![3]).unwrap();
    let r = verify_transitions(&c.signed, &other_plan, &full, &pk(&s));
    assert_eq!(r.failure_code(), Some(FailureCode::IncompleteDisclosure));
}

#[test]
fn tampered_item_payload_fails_data_hash() {
    let s = setup(12, 4);
    let (c, rec) = partial(&s);
    let plan = AuditPlan::from_indices(4, vec![0]).unwrap();
    let mut b = disclose(&rec, &s.data, &plan.sampled).unwrap();
    let e = b.entries.iter_mut().find(|e| e.category_path[0] == 0).unwrap();
    let i = e.category_path[1];
    e.leaf[9] ^= 1;
    let r = verify_transitions(&c.signed, &plan, &b, &pk(&s));
    let (check, f) = r.failure().unwrap();
    assert_eq!((check.id, f.code, f.index), ("3b", FailureCode::DataHashMismatch, Some(i)));
}

#[test]
fn full_partial_audit_agrees_with_complete_verification() {
    let s = setup(9, 3);
    let (pc, prec) = partial(&s);
    let cc = complete(&s);
    let plan = sample_transitions(3, 3, 1).unwrap();
    let b = disclose(&prec, &s.data, &plan.sampled).unwrap();
    assert!(verify_transitions(&pc.signed, &plan, &b, &pk(&s)).passed());
    assert!(verify_complete(&cc, &s.run.final_state.to_bytes(), &s.data, &pk(&s)).passed());
}

#[test]
fn sampling_is_uniform_and_reproducible() {
    assert_eq!(sample_transitions(7, 7, 3).unwrap().sampled, (0..7).collect::<Vec<_>>());
    assert_eq!(sample_transitions(50, 5, 9).unwrap(), sample_transitions(50, 5, 9).unwrap());
    assert!(sample_transitions(5, 6, 0).is_err());
    assert!(sample_transitions(5, 0, 0).is_err());
    let mut counts = [0u32; 10];
    let trials = 100_000;
    for seed in 0..trials {
        for j in sample_transitions(10, 3, seed).unwrap().sampled {
            counts[j as usize] += 1;
        }
    }
    for c in counts {
        assert!((c as f64 / trials as f64 - 0.3).abs() < 0.01, "{counts:?}");
    }
}

#[test]
fn plan_and_report_text_round_trip() {
    let plan = sample_transitions(40, 6, 77).unwrap();
    assert_eq!(AuditPlan::from_text(&plan.to_text()).unwrap(), plan);
    assert!(AuditPlan::from_text("m=4 v=2 seed=1 sampled=1").is_err());
    assert!(AuditPlan::from_text("m=4 v=1 seed=1 sampled=9").is_err());
    for code in FailureCode::ALL {
        assert_eq!(FailureCode::parse(code.name()), Some(code));
    }
    let s = setup(6, 2);
    let r = verify_complete(&complete(&s), &s.run.final_state.to_bytes(), &s.data, &pk(&s));
    let text = r.render();
    assert!(text.contains("[machine]") && text.contains("verdict=pass code=none exit=0"), "{text}");
}
