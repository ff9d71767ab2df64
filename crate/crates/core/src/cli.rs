//! Command-line front end.
//!
//! Exit status: 0 on success or a passing verification, 1 on errors, 2 on
//! usage errors, and 10-15 when verification fails (see
//! [`FailureCode::exit_code`]).
//!
//! Training configs are line-oriented `key = value` files; `#` starts a
//! comment. Keys: `layers` (comma-separated sizes, required), `activation`
//! (`relu` | `identity`), `bias` (`true` | `false`), `loss` (`mse` |
//! `softmax_cross_entropy`), `optimizer` (`sgd` | `momentum` | `adam`),
//! `learning_rate`, `momentum`, `beta1`, `beta2`, `epsilon`, `batch_size`
//! (required), `steps` (required), `init_seed`, `shuffle_seed`,
//! `init_scale`, `l2`, `checkpoint_every`.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::attest::{
    build_complete_record_with_arity, build_partial_record_with_arity, decode_public_key, decode_secret_key, disclose,
    encode_public_key, encode_secret_key, estimate_storage, generate_signing_key, sign_record, Checkpoint, Container,
    DisclosureBundle, Meta, Mode, CAT_META, DEFAULT_ARITY,
};
use crate::auditsim::{simulate, AttackScenario, DeltaProfile, Sampler, SimulationRow};
use crate::codec::{Reader, Writer};
use crate::dataset::{build_manifest, synthetic_xor, Dataset};
use crate::detnet::{Activation, ArchSpec, Loss, ModelState, Optimizer, OptimizerKind, TrainConfig};
use crate::run::{every_n_steps, execute, TrainingRun};
use crate::verify::{sample_transitions, verify_complete, verify_transitions, AuditPlan};
use crate::{Error, Result};

pub const MODEL_MAGIC: &[u8; 4] = b"TCMS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "traincert", version, about = "Deterministic training with signed, auditable hash-tree attestations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate an Ed25519 key pair.
    Keygen {
        #[arg(long)]
        secret: PathBuf,
        #[arg(long)]
        public: PathBuf,
    },
    /// Write a synthetic two-class dataset.
    GenData {
        #[arg(long)]
        items: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train deterministically and write the final model and run log.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        run: PathBuf,
    },
    /// Build and sign an attestation from a run log.
    Attest {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        key: PathBuf,
        #[arg(long, value_enum, default_value_t = ModeArg::Complete)]
        mode: ModeArg,
        /// Checkpoint interval for partial mode (defaults to every stored checkpoint).
        #[arg(long)]
        checkpoint_every: Option<u64>,
        #[arg(long, default_value_t = DEFAULT_ARITY)]
        arity: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw the transitions to audit.
    SamplePlan {
        /// Read the transition count from this attestation.
        #[arg(long, conflicts_with = "transitions")]
        attestation: Option<PathBuf>,
        #[arg(long)]
        transitions: Option<u64>,
        #[arg(long)]
        sample: u64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Open the checkpoints and items of an audit plan.
    Disclose {
        #[arg(long)]
        attestation: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Verify an attestation.
    Verify {
        #[arg(long)]
        attestation: PathBuf,
        #[arg(long)]
        public_key: PathBuf,
        /// Complete mode: the dataset.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Complete mode: the claimed final model.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Partial mode: the disclosure bundle.
        #[arg(long)]
        bundle: Option<PathBuf>,
        /// Partial mode: a plan file.
        #[arg(long)]
        plan: Option<PathBuf>,
        /// Partial mode without a plan file: number of transitions to sample.
        #[arg(long, requires = "seed")]
        sample: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Also write the report here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Monte Carlo audit simulation; prints one CSV row.
    Simulate {
        #[arg(long)]
        transitions: u64,
        #[arg(long)]
        sample: u64,
        #[arg(long)]
        manipulated: u64,
        #[arg(long, value_enum, default_value_t = KindArg::DataSubstitution)]
        kind: KindArg,
        #[arg(long, value_enum, default_value_t = SamplerArg::Uniform)]
        sampler: SamplerArg,
        /// Leveling: spread the manipulation so no delta stands out.
        #[arg(long)]
        leveled: bool,
        #[arg(long, default_value_t = 0)]
        target: u64,
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        no_header: bool,
    },
    /// Storage needed for checkpoints and their hash trees.
    Estimate {
        #[arg(long)]
        params: u64,
        #[arg(long)]
        checkpoints: u64,
        #[arg(long, default_value_t = DEFAULT_ARITY as u64)]
        arity: u64,
        #[arg(long, value_enum, default_value_t = OptArg::Sgd)]
        optimizer: OptArg,
        #[arg(long, default_value_t = 4)]
        bytes_per_param: u64,
        #[arg(long, default_value_t = 32)]
        digest_len: u64,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Complete,
    Partial,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum KindArg {
    DataSubstitution,
    StepCountLie,
    Leveling,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SamplerArg {
    Uniform,
    Heuristic,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OptArg {
    Sgd,
    Momentum,
    Adam,
}

/// Parsed training config file.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub steps: u64,
    /// `None` keeps only `f_0` and `f_k`.
    pub checkpoint_every: Option<u64>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("line {}: expected key = value", n + 1)))?;
            if kv.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
                return Err(Error::InvalidConfig(format!("line {}: duplicate key {}", n + 1, k.trim())));
            }
        }
        let mut take = |k: &str| kv.remove(k);
        fn num<T: std::str::FromStr>(key: &str, v: Option<String>, default: Option<T>) -> Result<T> {
            match v {
                Some(s) => s.parse().map_err(|_| Error::InvalidConfig(format!("{key}: cannot parse {s:?}"))),
                None => default.ok_or_else(|| Error::InvalidConfig(format!("missing key {key}"))),
            }
        }
        let layers = take("layers").ok_or_else(|| Error::InvalidConfig("missing key layers".into()))?;
        let layers = layers
            .split(',')
            .map(|s| s.trim().parse::<usize>().map_err(|_| Error::InvalidConfig(format!("layers: bad size {s:?}"))))
            .collect::<Result<Vec<_>>>()?;
        let activation = match take("activation") {
            Some(s) => Activation::parse(&s).ok_or_else(|| Error::InvalidConfig(format!("unknown activation {s}")))?,
            None => Activation::Relu,
        };
        let loss = match take("loss") {
            Some(s) => Loss::parse(&s).ok_or_else(|| Error::InvalidConfig(format!("unknown loss {s}")))?,
            None => Loss::SoftmaxCrossEntropy,
        };
        let bias: bool = num("bias", take("bias"), Some(true))?;
        let kind = match take("optimizer") {
            Some(s) => {
                OptimizerKind::parse(&s).ok_or_else(|| Error::InvalidConfig(format!("unknown optimizer {s}")))?
            }
            None => OptimizerKind::Sgd,
        };
        let lr: f32 = num("learning_rate", take("learning_rate"), Some(0.01))?;
        let mu: f32 = num("momentum", take("momentum"), Some(0.9))?;
        let beta1: f32 = num("beta1", take("beta1"), Some(0.9))?;
        let beta2: f32 = num("beta2", take("beta2"), Some(0.999))?;
        let eps: f32 = num("epsilon", take("epsilon"), Some(1e-8))?;
        let optimizer = match kind {
            OptimizerKind::Sgd => Optimizer::Sgd { lr },
            OptimizerKind::Momentum => Optimizer::Momentum { lr, mu },
            OptimizerKind::Adam => Optimizer::Adam { lr, beta1, beta2, eps },
        };
        let mut arch = ArchSpec::mlp(&layers, activation, loss);
        arch.bias = bias;
        let train = TrainConfig {
            arch,
            optimizer,
            batch_size: num("batch_size", take("batch_size"), None)?,
            init_seed: num("init_seed", take("init_seed"), Some(0))?,
            shuffle_seed: num("shuffle_seed", take("shuffle_seed"), Some(0))?,
            init_scale: num("init_scale", take("init_scale"), Some(0.5))?,
            l2: num("l2", take("l2"), Some(0.0))?,
        };
        let steps = num("steps", take("steps"), None)?;
        let checkpoint_every = take("checkpoint_every").map(|v| num("checkpoint_every", Some(v), None)).transpose()?;
        if let Some(k) = kv.keys().next() {
            return Err(Error::InvalidConfig(format!("unknown key {k}")));
        }
        train.validate()?;
        Ok(Self { train, steps, checkpoint_every })
    }
}

pub fn encode_model(state: &ModelState) -> Vec<u8> {
    let mut w = Writer::new();
    w.bytes(MODEL_MAGIC).bytes(&state.to_bytes());
    w.finish()
}

/// Canonical state bytes inside a model file (not validated further).
pub fn model_state_bytes(file: &[u8]) -> Result<&[u8]> {
    let mut r = Reader::new(file, "model file");
    r.expect_magic(MODEL_MAGIC)?;
    r.take(r.remaining())
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

fn dispatch(command: Command) -> Result<i32> {
    let mut out = std::io::stdout().lock();
    match command {
        Command::Keygen { secret, public } => {
            let key = generate_signing_key();
            write(&secret, encode_secret_key(&key))?;
            write(&public, encode_public_key(&key.verifying_key()))?;
            writeln!(out, "key fingerprint {}", crate::attest::key_fingerprint(&key.verifying_key()))?;
        }
        Command::GenData { items, seed, out: path } => {
            if items == 0 {
                return Err(Error::InvalidInput("need at least one item".into()));
            }
            write(&path, Dataset::from_examples(&synthetic_xor(items, seed)).to_bytes())?;
        }
        Command::Train { config, data, model, run } => {
            let cfg = RunConfig::parse(&read_text(&config)?)?;
            let data = Dataset::from_bytes(&read(&data)?)?;
            let every = cfg.checkpoint_every.unwrap_or(cfg.steps.max(1));
            let result = execute(&cfg.train, &data, cfg.steps, &every_n_steps(cfg.steps, every)?)?;
            write(&model, encode_model(&result.final_state))?;
            write(&run, result.to_bytes())?;
            writeln!(out, "trained {} steps, {} checkpoints", cfg.steps, result.checkpoints.len())?;
        }
        Command::Attest { run, data, key, mode, checkpoint_every, arity, out: path } => {
            let run = TrainingRun::from_bytes(&read(&run)?)?;
            let data = Dataset::from_bytes(&read(&data)?)?;
            let key = decode_secret_key(&read_text(&key)?)?;
            let manifest = build_manifest(data.payloads())?;
            let record = match mode {
                ModeArg::Complete => {
                    build_complete_record_with_arity(&run.config, &manifest, &run.schedule, &run.initial, arity)?
                }
                ModeArg::Partial => {
                    let cps = select_checkpoints(&run, checkpoint_every)?;
                    build_partial_record_with_arity(&run.config, &manifest, &run.schedule, &cps, arity)?
                }
            };
            let signed = sign_record(&record, &key);
            write(&path, Container::new(&record, signed).to_bytes())?;
            writeln!(out, "{} attestation, root {}", record.mode().name(), record.root())?;
        }
        Command::SamplePlan { attestation, transitions, sample, seed, out: path } => {
            let m = match (attestation, transitions) {
                (Some(a), _) => container_meta(&Container::from_bytes(&read(&a)?)?)?.transitions,
                (None, Some(m)) => m,
                (None, None) => return Err(Error::InvalidInput("give --attestation or --transitions".into())),
            };
            let plan = sample_transitions(m, sample, seed)?;
            match path {
                Some(p) => write(&p, plan.to_text())?,
                None => out.write_all(plan.to_text().as_bytes())?,
            }
        }
        Command::Disclose { attestation, data, plan, out: path } => {
            let record = Container::from_bytes(&read(&attestation)?)?.record()?;
            let data = Dataset::from_bytes(&read(&data)?)?;
            let plan = AuditPlan::from_text(&read_text(&plan)?)?;
            if plan.m != record.meta().transitions {
                return Err(Error::InvalidInput(format!(
                    "plan is for m = {}, record has m = {}",
                    plan.m,
                    record.meta().transitions
                )));
            }
            let bundle = disclose(&record, &data, &plan.sampled)?;
            write(&path, bundle.to_bytes())?;
            writeln!(out, "disclosed {} entries", bundle.entries.len())?;
        }
        Command::Verify { attestation, public_key, data, model, bundle, plan, sample, seed, report } => {
            let container = Container::from_bytes(&read(&attestation)?)?;
            let pk = decode_public_key(&read_text(&public_key)?)?;
            let result = match container.mode {
                Mode::Complete => {
                    let (Some(data), Some(model)) = (data, model) else {
                        return Err(Error::InvalidInput("complete verification needs --data and --model".into()));
                    };
                    let data = Dataset::from_bytes(&read(&data)?)?;
                    let model = read(&model)?;
                    verify_complete(&container, model_state_bytes(&model)?, &data, &pk)
                }
                Mode::Partial => {
                    let bundle =
                        bundle.ok_or_else(|| Error::InvalidInput("partial verification needs --bundle".into()))?;
                    let bundle = DisclosureBundle::from_bytes(&read(&bundle)?)?;
                    let plan = match (plan, sample, seed) {
                        (Some(p), _, _) => AuditPlan::from_text(&read_text(&p)?)?,
                        (None, Some(v), Some(s)) => sample_transitions(container_meta(&container)?.transitions, v, s)?,
                        _ => {
                            return Err(Error::InvalidInput(
                                "partial verification needs --plan or --sample/--seed".into(),
                            ))
                        }
                    };
                    verify_transitions(&container.signed, &plan, &bundle, &pk)
                }
            };
            let text = result.render();
            out.write_all(text.as_bytes())?;
            if let Some(p) = report {
                write(&p, &text)?;
            }
            return Ok(result.exit_code());
        }
        Command::Simulate {
            transitions,
            sample,
            manipulated,
            kind,
            sampler,
            leveled,
            target,
            trials,
            seed,
            no_header,
        } => {
            let scenario = match kind {
                KindArg::DataSubstitution => AttackScenario::data_substitution(transitions, manipulated)?,
                KindArg::StepCountLie => {
                    if manipulated != 1 {
                        return Err(Error::InvalidInput("a step-count lie manipulates one transition".into()));
                    }
                    AttackScenario::step_count_lie(transitions)?
                }
                KindArg::Leveling => {
                    AttackScenario::leveling(transitions, manipulated, target, leveled, DeltaProfile::default())?
                }
            };
            let sampler = match sampler {
                SamplerArg::Uniform => Sampler::Uniform,
                SamplerArg::Heuristic => Sampler::WeightDeltaHeuristic,
            };
            let row = simulate(&scenario, sample, trials, seed, sampler)?;
            if !no_header {
                writeln!(out, "{}", SimulationRow::CSV_HEADER)?;
            }
            writeln!(out, "{}", row.to_csv())?;
        }
        Command::Estimate { params, checkpoints, arity, optimizer, bytes_per_param, digest_len } => {
            let kind = match optimizer {
                OptArg::Sgd => OptimizerKind::Sgd,
                OptArg::Momentum => OptimizerKind::Momentum,
                OptArg::Adam => OptimizerKind::Adam,
            };
            let e = estimate_storage(params, checkpoints, arity, kind, bytes_per_param, digest_len)?;
            let rows = [
                ("stored_values", e.stored_values),
                ("per_checkpoint_bytes", e.per_checkpoint_bytes),
                ("tree_bytes", e.tree_bytes),
                ("penultimate_level_bytes", e.penultimate_level_bytes),
                ("total_bytes", e.total_bytes),
                ("total_bound_bytes", e.total_bound_bytes),
            ];
            writeln!(out, "quantity,bytes,mib")?;
            for (name, v) in rows {
                writeln!(out, "{name},{v},{:.3}", v as f64 / (1u64 << 20) as f64)?;
            }
        }
    }
    Ok(EXIT_OK)
}

fn container_meta(c: &Container) -> Result<Meta> {
    Meta::from_bytes(c.sections.get(CAT_META as usize - 1).map(Vec::as_slice).unwrap_or_default())
}

fn select_checkpoints(run: &TrainingRun, every: Option<u64>) -> Result<Vec<Checkpoint>> {
    let Some(every) = every else {
        return Ok(run.checkpoints.clone());
    };
    let steps = every_n_steps(run.schedule.steps(), every)?;
    steps
        .iter()
        .map(|&s| {
            run.checkpoints.iter().find(|c| c.step == s).cloned().ok_or_else(|| {
                Error::InvalidInput(format!(
                    "run log has no checkpoint at step {s}; retrain with a finer checkpoint_every"
                ))
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parses_with_defaults() {
        let c =
            RunConfig::parse("layers = 2, 16, 2\nbatch_size = 8 # per step\nsteps = 10\noptimizer = adam\n").unwrap();
        assert_eq!(c.train.arch.layer_sizes, [2, 16, 2]);
        assert_eq!(c.train.optimizer, Optimizer::Adam { lr: 0.01, beta1: 0.9, beta2: 0.999, eps: 1e-8 });
        assert_eq!((c.steps, c.checkpoint_every), (10, None));
    }

    #[test]
    fn config_rejects_bad_input() {
        for bad in [
            "batch_size = 8\nsteps = 1",
            "layers = 2,2\nsteps = 1",
            "layers = 2,2\nbatch_size = 1\nsteps = 1\nfoo = 1",
            "layers = 2,2\nbatch_size = 1\nsteps = 1\nsteps = 2",
            "layers = 2,x\nbatch_size = 1\nsteps = 1",
            "layers = 2,2\nbatch_size = 1\nsteps = 1\nloss = hinge",
            "layers = 2,2\nbatch_size = 0\nsteps = 1",
            "nonsense",
        ] {
            assert!(RunConfig::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn model_file_round_trip() {
        let cfg = RunConfig::parse("layers = 2,3,1\nbatch_size = 1\nsteps = 0").unwrap();
        let st = ModelState::initial(&cfg.train).unwrap();
        assert_eq!(model_state_bytes(&encode_model(&st)).unwrap(), st.to_bytes());
        assert!(model_state_bytes(b"XXXX").is_err());
    }
}
