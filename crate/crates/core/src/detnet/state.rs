use super::arch::ArchSpec;
use super::config::{OptimizerKind, TrainConfig};
use super::prng::PrngState;
use crate::codec::{Reader, Writer};
use crate::{Error, Result};

/// Weights plus optimiser state after `step_index` training steps.
///
/// Canonical encoding (hashed and compared byte-for-byte): u64 n, the n
/// weights, each auxiliary n-vector in declared order (momentum velocity;
/// Adam first then second moment), u64 step_index. All little-endian.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    pub weights: Vec<f32>,
    pub opt: OptState,
    pub step_index: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum OptState {
    Sgd,
    Momentum { velocity: Vec<f32> },
    Adam { m: Vec<f32>, v: Vec<f32> },
}

impl OptState {
    pub fn zeroed(kind: OptimizerKind, n: usize) -> Self {
        match kind {
            OptimizerKind::Sgd => OptState::Sgd,
            OptimizerKind::Momentum => OptState::Momentum { velocity: vec![0.0; n] },
            OptimizerKind::Adam => OptState::Adam { m: vec![0.0; n], v: vec![0.0; n] },
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        match self {
            OptState::Sgd => OptimizerKind::Sgd,
            OptState::Momentum { .. } => OptimizerKind::Momentum,
            OptState::Adam { .. } => OptimizerKind::Adam,
        }
    }

    fn vectors(&self) -> Vec<&[f32]> {
        match self {
            OptState::Sgd => vec![],
            OptState::Momentum { velocity } => vec![velocity],
            OptState::Adam { m, v } => vec![m, v],
        }
    }
}

impl ModelState {
    pub fn param_count(&self) -> usize {
        self.weights.len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.weights.len();
        let vecs = self.opt.vectors();
        let mut w = Writer::with_capacity(16 + 4 * n * (1 + vecs.len()));
        w.u64(n as u64).f32s(&self.weights);
        for v in vecs {
            w.f32s(v);
        }
        w.u64(self.step_index);
        w.finish()
    }

    /// Decodes canonical bytes. The optimiser kind follows from the length.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "model state");
        let n = r.u64()?;
        if n == 0 {
            return Err(r.err("zero parameters"));
        }
        let body = (bytes.len() as u128).saturating_sub(16);
        let per_vec = n as u128 * 4;
        if body % per_vec != 0 || !(1..=3).contains(&(body / per_vec)) {
            return Err(r.err(format!("length {} does not fit n = {n}", bytes.len())));
        }
        let n = n as usize;
        let weights = r.f32s(n)?;
        let opt = match body / per_vec - 1 {
            0 => OptState::Sgd,
            1 => OptState::Momentum { velocity: r.f32s(n)? },
            _ => OptState::Adam { m: r.f32s(n)?, v: r.f32s(n)? },
        };
        let step_index = r.u64()?;
        r.finish()?;
        Ok(Self { weights, opt, step_index })
    }

    pub fn initial(config: &TrainConfig) -> Result<Self> {
        init_model(&config.arch, config.optimizer.kind(), config.init_seed, config.init_scale)
    }
}

/// Initial model: every parameter in weight order drawn uniformly from
/// `[-init_scale, init_scale]` by a SplitMix64 stream seeded with `seed`.
///
/// Each draw maps the top 24 bits `u` of one output to
/// `(u * 2^-24 * 2 - 1) * init_scale + 0`; the final `+ 0` turns `-0.0` into
/// `+0.0` so a zero scale yields all-zero bytes.
pub fn init_model(arch: &ArchSpec, optimizer: OptimizerKind, seed: u64, init_scale: f32) -> Result<ModelState> {
    arch.validate()?;
    if !init_scale.is_finite() || init_scale < 0.0 {
        return Err(Error::InvalidConfig(format!("init_scale {init_scale}")));
    }
    let n = arch.param_count();
    let mut rng = PrngState::new(seed);
    let weights = (0..n).map(|_| (rng.next_unit_f32() * 2.0 - 1.0) * init_scale + 0.0).collect();
    Ok(ModelState { weights, opt: OptState::zeroed(optimizer, n), step_index: 0 })
}
