//! End-to-end training runs: schedule, replayable steps and checkpoints.

use crate::attest::Checkpoint;
use crate::codec::{Reader, Writer};
use crate::dataset::{batch_schedule, decode_payload, stream_state_at, BatchSchedule, DataStore};
use crate::detnet::{train_step, Example, ModelState, TrainConfig};
use crate::{Error, Result};

pub const RUN_MAGIC: &[u8; 4] = b"TCRN";
const RUN_VERSION: u16 = 1;

/// Everything a prover keeps from one training run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingRun {
    pub config: TrainConfig,
    pub schedule: BatchSchedule,
    pub initial: ModelState,
    /// `f_{i_0} = f_0, ..., f_{i_m} = f_k`.
    pub checkpoints: Vec<Checkpoint>,
    pub final_state: ModelState,
}

impl TrainingRun {
    /// Run log: magic `TCRN`, u16 version, set-up, trainer, schedule,
    /// initial and final state as length-prefixed blobs, then u64 count and
    /// per checkpoint u64 step, state blob and aux blob.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(RUN_MAGIC).u16(RUN_VERSION);
        w.blob(&self.config.arch.encode_setup()).blob(&self.config.encode_trainer());
        w.blob(&self.schedule.to_bytes()).blob(&self.initial.to_bytes()).blob(&self.final_state.to_bytes());
        w.u64(self.checkpoints.len() as u64);
        for c in &self.checkpoints {
            w.u64(c.step).blob(&c.state).blob(&c.aux);
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "run log");
        r.expect_magic(RUN_MAGIC)?;
        if r.u16()? != RUN_VERSION {
            return Err(r.err("unsupported version"));
        }
        let config = TrainConfig::decode(r.blob()?, r.blob()?)?;
        let schedule = BatchSchedule::from_bytes(r.blob()?)?;
        let initial = ModelState::from_bytes(r.blob()?)?;
        let final_state = ModelState::from_bytes(r.blob()?)?;
        let count = r.count(24)?;
        let checkpoints = (0..count)
            .map(|_| Ok(Checkpoint { step: r.u64()?, state: r.blob()?.to_vec(), aux: r.blob()?.to_vec() }))
            .collect::<Result<Vec<_>>>()?;
        r.finish()?;
        Ok(Self { config, schedule, initial, checkpoints, final_state })
    }
}

/// `m + 1` checkpoint steps `floor(j * k / m)`, for `1 <= m <= k`.
pub fn evenly_spaced(k: u64, m: u64) -> Result<Vec<u64>> {
    if m == 0 || m > k {
        return Err(Error::InvalidInput(format!("need 1 <= m <= k, got m={m}, k={k}")));
    }
    Ok((0..=m).map(|j| (j as u128 * k as u128 / m as u128) as u64).collect())
}

/// `0, every, 2 * every, ...` and always `k`.
pub fn every_n_steps(k: u64, every: u64) -> Result<Vec<u64>> {
    if every == 0 {
        return Err(Error::InvalidInput("checkpoint interval must be positive".into()));
    }
    let mut steps: Vec<u64> = (0..k).step_by(every as usize).collect();
    steps.push(k);
    steps.dedup();
    Ok(steps)
}

/// Auxiliary checkpoint bytes: the shuffle generator state at the first
/// index the next transition consumes.
pub fn checkpoint_aux(config: &TrainConfig, d: u64, step: u64) -> Vec<u8> {
    stream_state_at(config.shuffle_seed, d, step * config.batch_size as u64).to_bytes().to_vec()
}

/// Trains `k` steps from the seeded initial model, keeping the states at
/// `checkpoint_steps` (ascending, starting at 0 and ending at `k`; may be
/// empty when no checkpoints are wanted).
pub fn execute(config: &TrainConfig, data: &dyn DataStore, k: u64, checkpoint_steps: &[u64]) -> Result<TrainingRun> {
    config.validate()?;
    let d = data.item_count();
    let examples: Vec<Example> = (1..=d)
        .map(|i| decode_payload(data.item(i).ok_or(Error::IndexOutOfRange { index: i, d })?))
        .collect::<Result<_>>()?;
    let schedule = batch_schedule(config.shuffle_seed, d, config.batch_size as u64, k)?;
    if !checkpoint_steps.is_empty()
        && (checkpoint_steps[0] != 0
            || *checkpoint_steps.last().unwrap() != k
            || checkpoint_steps.windows(2).any(|w| w[1] <= w[0]))
    {
        return Err(Error::InvalidInput("checkpoint steps must rise from 0 to k".into()));
    }
    let initial = ModelState::initial(config)?;
    let mut state = initial.clone();
    let mut checkpoints = Vec::with_capacity(checkpoint_steps.len());
    let mut next = checkpoint_steps.iter().peekable();
    let mut batch = Vec::with_capacity(config.batch_size);
    for t in 0..=k {
        if next.peek() == Some(&&t) {
            next.next();
            checkpoints.push(Checkpoint { step: t, state: state.to_bytes(), aux: checkpoint_aux(config, d, t) });
        }
        if t == k {
            break;
        }
        batch.clear();
        batch.extend(schedule.row(t).iter().map(|&i| examples[i as usize - 1].clone()));
        state = train_step(&state, &batch, config).map_err(|e| match e {
            e @ Error::NonFinite { .. } => e,
            e => Error::Step { step: t, source: Box::new(e) },
        })?;
    }
    Ok(TrainingRun { config: config.clone(), schedule, initial, checkpoints, final_state: state })
}
