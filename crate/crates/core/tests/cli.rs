use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;
use traincert::verify::FailureCode;

const REFERENCE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/reference.conf");

fn tc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_traincert")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let o = tc(args);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{args:?}\n{}\n{}",
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    );
    o
}

struct Work {
    dir: TempDir,
}

impl Work {
    fn new() -> Self {
        Self { dir: tempfile::tempdir().unwrap() }
    }

    fn p(&self, name: &str) -> String {
        self.dir.path().join(name).to_str().unwrap().to_string()
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn small_config(&self, steps: u64, every: u64) -> String {
        let text = format!(
            "layers = 2,5,2\noptimizer = momentum\nlearning_rate = 0.05\nbatch_size = 4\nsteps = {steps}\n\
             init_seed = 3\nshuffle_seed = 4\ncheckpoint_every = {every}\n"
        );
        let path = self.p("small.conf");
        std::fs::write(&path, text).unwrap();
        path
    }

    fn prepare(&self, config: &str, items: &str) {
        ok(&["keygen", "--secret", &self.p("k.sec"), "--public", &self.p("k.pub")]);
        ok(&["gen-data", "--items", items, "--seed", "5", "--out", &self.p("data.tcds")]);
        ok(&[
            "train",
            "--config",
            config,
            "--data",
            &self.p("data.tcds"),
            "--model",
            &self.p("final.tcms"),
            "--run",
            &self.p("run.tcrn"),
        ]);
    }
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn flip(path: &Path, offset_from_end: usize) {
    let mut b = std::fs::read(path).unwrap();
    let i = b.len() - offset_from_end;
    b[i] ^= 0x01;
    std::fs::write(path, b).unwrap();
}

#[test]
fn complete_round_trip_and_failure_exit_codes() {
    let w = Work::new();
    let cfg = w.small_config(30, 10);
    w.prepare(&cfg, "40");
    ok(&[
        "attest",
        "--run",
        &w.p("run.tcrn"),
        "--data",
        &w.p("data.tcds"),
        "--key",
        &w.p("k.sec"),
        "--out",
        &w.p("c.tcat"),
    ]);
    let verify = |att: &str, pubkey: &str, data: &str| {
        tc(&[
            "verify",
            "--attestation",
            att,
            "--public-key",
            pubkey,
            "--data",
            data,
            "--model",
            &w.p("final.tcms"),
            "--report",
            &w.p("report.txt"),
        ])
    };
    let o = verify(&w.p("c.tcat"), &w.p("k.pub"), &w.p("data.tcds"));
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let report = std::fs::read_to_string(w.path("report.txt")).unwrap();
    assert!(report.contains("verdict=pass"));

    std::fs::copy(w.path("data.tcds"), w.path("bad.tcds")).unwrap();
    flip(&w.path("bad.tcds"), 3);
    assert_eq!(
        code(&verify(&w.p("c.tcat"), &w.p("k.pub"), &w.p("bad.tcds"))),
        FailureCode::DataHashMismatch.exit_code()
    );

    ok(&["keygen", "--secret", &w.p("o.sec"), "--public", &w.p("o.pub")]);
    assert_eq!(
        code(&verify(&w.p("c.tcat"), &w.p("o.pub"), &w.p("data.tcds"))),
        FailureCode::SignatureInvalid.exit_code()
    );

    std::fs::copy(w.path("c.tcat"), w.path("t.tcat")).unwrap();
    flip(&w.path("t.tcat"), SIGNED_BLOCK + 5);
    assert_eq!(code(&verify(&w.p("t.tcat"), &w.p("k.pub"), &w.p("data.tcds"))), FailureCode::TreeMismatch.exit_code());
}

const SIGNED_BLOCK: usize = 128;

#[test]
fn partial_round_trip_through_plan_and_bundle() {
    let w = Work::new();
    let cfg = w.small_config(24, 4);
    w.prepare(&cfg, "32");
    ok(&[
        "attest",
        "--run",
        &w.p("run.tcrn"),
        "--data",
        &w.p("data.tcds"),
        "--key",
        &w.p("k.sec"),
        "--mode",
        "partial",
        "--out",
        &w.p("p.tcat"),
    ]);
    ok(&["sample-plan", "--attestation", &w.p("p.tcat"), "--sample", "3", "--seed", "99", "--out", &w.p("plan.txt")]);
    let plan = std::fs::read_to_string(w.path("plan.txt")).unwrap();
    assert!(plan.starts_with("m=6 v=3 seed=99"), "{plan}");
    ok(&[
        "disclose",
        "--attestation",
        &w.p("p.tcat"),
        "--data",
        &w.p("data.tcds"),
        "--plan",
        &w.p("plan.txt"),
        "--out",
        &w.p("b.tcdb"),
    ]);
    ok(&[
        "verify",
        "--attestation",
        &w.p("p.tcat"),
        "--public-key",
        &w.p("k.pub"),
        "--bundle",
        &w.p("b.tcdb"),
        "--plan",
        &w.p("plan.txt"),
    ]);
    ok(&[
        "verify",
        "--attestation",
        &w.p("p.tcat"),
        "--public-key",
        &w.p("k.pub"),
        "--bundle",
        &w.p("b.tcdb"),
        "--sample",
        "3",
        "--seed",
        "99",
    ]);
    let other = tc(&[
        "verify",
        "--attestation",
        &w.p("p.tcat"),
        "--public-key",
        &w.p("k.pub"),
        "--bundle",
        &w.p("b.tcdb"),
        "--sample",
        "6",
        "--seed",
        "1",
    ]);
    assert_eq!(code(&other), FailureCode::IncompleteDisclosure.exit_code());

    ok(&[
        "attest",
        "--run",
        &w.p("run.tcrn"),
        "--data",
        &w.p("data.tcds"),
        "--key",
        &w.p("k.sec"),
        "--mode",
        "partial",
        "--checkpoint-every",
        "24",
        "--out",
        &w.p("p1.tcat"),
    ]);
    let o = ok(&["sample-plan", "--attestation", &w.p("p1.tcat"), "--sample", "1", "--seed", "0"]);
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("m=1 "));
    let o = tc(&[
        "attest",
        "--run",
        &w.p("run.tcrn"),
        "--data",
        &w.p("data.tcds"),
        "--key",
        &w.p("k.sec"),
        "--mode",
        "partial",
        "--checkpoint-every",
        "5",
        "--out",
        &w.p("p2.tcat"),
    ]);
    assert_eq!(code(&o), 1);
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let w = Work::new();
    let cfg = w.small_config(12, 3);
    w.prepare(&cfg, "20");
    let first = std::fs::read(w.path("final.tcms")).unwrap();
    let run = std::fs::read(w.path("run.tcrn")).unwrap();
    ok(&[
        "train",
        "--config",
        &cfg,
        "--data",
        &w.p("data.tcds"),
        "--model",
        &w.p("final2.tcms"),
        "--run",
        &w.p("run2.tcrn"),
    ]);
    assert_eq!(first, std::fs::read(w.path("final2.tcms")).unwrap());
    assert_eq!(run, std::fs::read(w.path("run2.tcrn")).unwrap());
    for out in ["a.tcat", "b.tcat"] {
        ok(&[
            "attest",
            "--run",
            &w.p("run.tcrn"),
            "--data",
            &w.p("data.tcds"),
            "--key",
            &w.p("k.sec"),
            "--out",
            &w.p(out),
        ]);
    }
    assert_eq!(std::fs::read(w.path("a.tcat")).unwrap(), std::fs::read(w.path("b.tcat")).unwrap());
}

#[test]
fn zero_steps_leave_the_initial_model() {
    let w = Work::new();
    let cfg = w.small_config(0, 1);
    w.prepare(&cfg, "8");
    let run = traincert::run::TrainingRun::from_bytes(&std::fs::read(w.path("run.tcrn")).unwrap()).unwrap();
    let model = std::fs::read(w.path("final.tcms")).unwrap();
    assert_eq!(traincert::cli::model_state_bytes(&model).unwrap(), run.initial.to_bytes());
    ok(&[
        "attest",
        "--run",
        &w.p("run.tcrn"),
        "--data",
        &w.p("data.tcds"),
        "--key",
        &w.p("k.sec"),
        "--out",
        &w.p("c.tcat"),
    ]);
    ok(&[
        "verify",
        "--attestation",
        &w.p("c.tcat"),
        "--public-key",
        &w.p("k.pub"),
        "--data",
        &w.p("data.tcds"),
        "--model",
        &w.p("final.tcms"),
    ]);
}

#[test]
fn reference_config_trains() {
    let w = Work::new();
    w.prepare(REFERENCE, "256");
    let run = traincert::run::TrainingRun::from_bytes(&std::fs::read(w.path("run.tcrn")).unwrap()).unwrap();
    assert_eq!(run.checkpoints.len(), 51);
    assert_eq!(run.final_state.step_index, 2500);
}

#[test]
fn simulate_and_estimate_tables() {
    let o = ok(&["simulate", "--transitions", "2500", "--sample", "50", "--manipulated", "5", "--trials", "2000"]);
    let text = String::from_utf8(o.stdout).unwrap();
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(&row[..5], ["2500", "50", "5", "data_substitution", "uniform"]);
    assert!((row[5].parse::<f64>().unwrap() - 0.9038).abs() < 1e-4);

    let o = ok(&["estimate", "--params", "134217728", "--checkpoints", "10", "--optimizer", "adam"]);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains(&format!("total_bound_bytes,{},", 20u64 << 30)), "{text}");
    let o = ok(&["estimate", "--params", "134217728", "--checkpoints", "0"]);
    assert!(String::from_utf8(o.stdout).unwrap().contains("total_bound_bytes,0,"));

    assert_eq!(code(&tc(&["simulate", "--transitions", "10", "--sample", "11", "--manipulated", "1"])), 1);
    assert_eq!(code(&tc(&["estimate", "--params", "10", "--checkpoints", "1", "--arity", "1"])), 1);
    assert_eq!(code(&tc(&["frobnicate"])), 2);
    assert_eq!(code(&tc(&["verify"])), 2);
}

#[test]
fn missing_files_and_keys_fail_cleanly() {
    let w = Work::new();
    let cfg = w.small_config(4, 2);
    w.prepare(&cfg, "8");
    let o = tc(&[
        "attest",
        "--run",
        &w.p("run.tcrn"),
        "--data",
        &w.p("data.tcds"),
        "--key",
        &w.p("nope.sec"),
        "--out",
        &w.p("c.tcat"),
    ]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("error:"));
    let o = tc(&[
        "attest",
        "--run",
        &w.p("run.tcrn"),
        "--data",
        &w.p("data.tcds"),
        "--key",
        &w.p("k.pub"),
        "--out",
        &w.p("c.tcat"),
    ]);
    assert_eq!(code(&o), 1);
    assert_eq!(
        code(&tc(&[
            "train",
            "--config",
            &w.p("none.conf"),
            "--data",
            &w.p("data.tcds"),
            "--model",
            &w.p("m"),
            "--run",
            &w.p("r")
        ])),
        1
    );
}
