#![allow(dead_code)]

use traincert::attest::{
    build_complete_record, build_partial_record, disclose, sign_record, AttestationRecord, Container, DisclosureBundle,
    SigningKey,
};
use traincert::dataset::{build_manifest, synthetic_xor, Dataset};
use traincert::detnet::{Activation, ArchSpec, Loss, Optimizer, TrainConfig};
use traincert::run::{every_n_steps, execute, TrainingRun};
use traincert::verify::{verify_complete, verify_transitions, AuditPlan, VerificationReport};

pub fn adam() -> Optimizer {
    Optimizer::Adam { lr: 0.01, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
}

pub struct Scenario {
    pub data: Dataset,
    pub run: TrainingRun,
    pub key: SigningKey,
}

pub struct RunSpec {
    pub layers: Vec<usize>,
    pub items: usize,
    pub batch: usize,
    pub steps: u64,
    pub every: u64,
    pub optimizer: Optimizer,
    pub seed: u64,
}

impl RunSpec {
    pub fn small() -> Self {
        Self { layers: vec![2, 6, 2], items: 48, batch: 4, steps: 60, every: 6, optimizer: adam(), seed: 1 }
    }

    pub fn reference() -> Self {
        Self { layers: vec![2, 16, 2], items: 256, batch: 8, steps: 2500, every: 50, optimizer: adam(), seed: 1 }
    }

    pub fn config(&self) -> TrainConfig {
        TrainConfig {
            arch: ArchSpec::mlp(&self.layers, Activation::Relu, Loss::SoftmaxCrossEntropy),
            optimizer: self.optimizer,
            batch_size: self.batch,
            init_seed: self.seed,
            shuffle_seed: self.seed.wrapping_add(1),
            init_scale: 0.5,
            l2: 0.0,
        }
    }

    pub fn build(&self) -> Scenario {
        let data = Dataset::from_examples(&synthetic_xor(self.items, self.seed));
        let steps = every_n_steps(self.steps, self.every).unwrap();
        let run = execute(&self.config(), &data, self.steps, &steps).unwrap();
        Scenario { data, run, key: SigningKey::from_bytes(&[0x5A; 32]) }
    }
}

impl Scenario {
    pub fn pk(&self) -> [u8; 32] {
        self.key.verifying_key().to_bytes()
    }

    pub fn complete_record(&self) -> AttestationRecord {
        let manifest = build_manifest(self.data.payloads()).unwrap();
        build_complete_record(&self.run.config, &manifest, &self.run.schedule, &self.run.initial).unwrap()
    }

    pub fn partial_record(&self) -> AttestationRecord {
        let manifest = build_manifest(self.data.payloads()).unwrap();
        build_partial_record(&self.run.config, &manifest, &self.run.schedule, &self.run.checkpoints).unwrap()
    }

    pub fn seal(&self, record: &AttestationRecord) -> Container {
        Container::new(record, sign_record(record, &self.key))
    }

    pub fn m(&self) -> u64 {
        self.run.checkpoints.len() as u64 - 1
    }

    pub fn verify_complete(&self, c: &Container, data: &Dataset, final_state: &[u8]) -> VerificationReport {
        verify_complete(c, final_state, data, &self.pk())
    }

    pub fn verify_partial(
        &self,
        c: &Container,
        record: &AttestationRecord,
        data: &Dataset,
        sampled: Vec<u64>,
    ) -> VerificationReport {
        let plan = AuditPlan::from_indices(self.m(), sampled).unwrap();
        let bundle = disclose(record, data, &plan.sampled).unwrap();
        verify_transitions(&c.signed, &plan, &bundle, &self.pk())
    }

    pub fn verify_bundle(&self, c: &Container, bundle: &DisclosureBundle, sampled: Vec<u64>) -> VerificationReport {
        let plan = AuditPlan::from_indices(self.m(), sampled).unwrap();
        verify_transitions(&c.signed, &plan, bundle, &self.pk())
    }
}

/// Rebuilds a record from (possibly tampered) sections and signs it with
/// the honest key, as a malicious prover would.
pub fn resign(s: &Scenario, sections: Vec<Vec<u8>>) -> (Container, AttestationRecord) {
    let record = AttestationRecord::from_sections(sections).unwrap();
    (s.seal(&record), record)
}

pub fn flip_bit(bytes: &mut [u8], bit: usize) {
    bytes[bit / 8] ^= 1 << (bit % 8);
}
