use super::arch::{ArchSpec, Loss};
use crate::codec::{Reader, Writer};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OptimizerKind {
    Sgd,
    Momentum,
    Adam,
}

impl OptimizerKind {
    /// Number of n-vectors of auxiliary state.
    pub fn aux_vectors(self) -> usize {
        match self {
            OptimizerKind::Sgd => 0,
            OptimizerKind::Momentum => 1,
            OptimizerKind::Adam => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Momentum => "momentum",
            OptimizerKind::Adam => "adam",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sgd" => Some(OptimizerKind::Sgd),
            "momentum" => Some(OptimizerKind::Momentum),
            "adam" => Some(OptimizerKind::Adam),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Optimizer {
    Sgd {
        lr: f32,
    },
    /// `v <- mu*v + g; w <- w - lr*v`
    Momentum {
        lr: f32,
        mu: f32,
    },
    /// Bias-corrected Adam; the timestep is `step_index + 1` at each update.
    Adam {
        lr: f32,
        beta1: f32,
        beta2: f32,
        eps: f32,
    },
}

impl Optimizer {
    pub fn kind(&self) -> OptimizerKind {
        match self {
            Optimizer::Sgd { .. } => OptimizerKind::Sgd,
            Optimizer::Momentum { .. } => OptimizerKind::Momentum,
            Optimizer::Adam { .. } => OptimizerKind::Adam,
        }
    }

    pub fn lr(&self) -> f32 {
        match *self {
            Optimizer::Sgd { lr } | Optimizer::Momentum { lr, .. } | Optimizer::Adam { lr, .. } => lr,
        }
    }

    fn params(&self) -> Vec<f32> {
        match *self {
            Optimizer::Sgd { lr } => vec![lr],
            Optimizer::Momentum { lr, mu } => vec![lr, mu],
            Optimizer::Adam { lr, beta1, beta2, eps } => vec![lr, beta1, beta2, eps],
        }
    }
}

/// Identifier of the arithmetic contract: binary32, round-to-nearest-even,
/// no FMA, ascending-order reductions, in-crate `exp`/`ln`.
pub const ARITHMETIC_CONTRACT: u8 = 1;

/// Everything that determines the training step function besides the data.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub arch: ArchSpec,
    pub optimizer: Optimizer,
    pub batch_size: usize,
    pub init_seed: u64,
    pub shuffle_seed: u64,
    pub init_scale: f32,
    /// L2 coefficient: adds `l2 * w` to every gradient component.
    pub l2: f32,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be at least 1".into()));
        }
        let mut scalars = self.optimizer.params();
        scalars.extend([self.init_scale, self.l2]);
        if scalars.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("hyperparameters must be finite".into()));
        }
        if self.init_scale < 0.0 || self.l2 < 0.0 {
            return Err(Error::InvalidConfig("init_scale and l2 must be non-negative".into()));
        }
        Ok(())
    }

    /// Trainer bytes: loss, optimizer with its hyperparameters, batch size,
    /// seeds, initialisation scale, regularisation and arithmetic contract.
    pub fn encode_trainer(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u8(self.arch.loss.code()).u8(ARITHMETIC_CONTRACT);
        let kind = match self.optimizer.kind() {
            OptimizerKind::Sgd => 0,
            OptimizerKind::Momentum => 1,
            OptimizerKind::Adam => 2,
        };
        let params = self.optimizer.params();
        w.u8(kind).u8(params.len() as u8).f32s(&params);
        w.u64(self.batch_size as u64).u64(self.init_seed).u64(self.shuffle_seed).f32(self.init_scale).f32(self.l2);
        w.finish()
    }

    /// Rebuilds the configuration from set-up and trainer bytes.
    pub fn decode(setup: &[u8], trainer: &[u8]) -> Result<Self> {
        let mut r = Reader::new(trainer, "trainer category");
        let loss = Loss::from_code(r.u8()?).ok_or_else(|| r.err("unknown loss"))?;
        if r.u8()? != ARITHMETIC_CONTRACT {
            return Err(r.err("unsupported arithmetic contract"));
        }
        let kind = r.u8()?;
        let nparams = r.u8()? as usize;
        let p = r.f32s(nparams)?;
        let optimizer = match (kind, p.as_slice()) {
            (0, &[lr]) => Optimizer::Sgd { lr },
            (1, &[lr, mu]) => Optimizer::Momentum { lr, mu },
            (2, &[lr, beta1, beta2, eps]) => Optimizer::Adam { lr, beta1, beta2, eps },
            _ => return Err(r.err("unknown optimizer encoding")),
        };
        let batch_size = usize::try_from(r.u64()?).map_err(|_| r.err("batch size overflow"))?;
        let init_seed = r.u64()?;
        let shuffle_seed = r.u64()?;
        let init_scale = r.f32()?;
        let l2 = r.f32()?;
        r.finish()?;

        let mut sr = Reader::new(setup, "setup category");
        let arch = ArchSpec::decode_setup(&mut sr, loss)?;
        sr.finish()?;

        let cfg = Self { arch, optimizer, batch_size, init_seed, shuffle_seed, init_scale, l2 };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detnet::Activation;

    fn cfg(optimizer: Optimizer) -> TrainConfig {
        TrainConfig {
            arch: ArchSpec::mlp(&[2, 4, 2], Activation::Relu, Loss::SoftmaxCrossEntropy),
            optimizer,
            batch_size: 4,
            init_seed: 1,
            shuffle_seed: 2,
            init_scale: 0.5,
            l2: 0.001,
        }
    }

    #[test]
    fn trainer_bytes_round_trip() {
        for opt in [
            Optimizer::Sgd { lr: 0.1 },
            Optimizer::Momentum { lr: 0.05, mu: 0.9 },
            Optimizer::Adam { lr: 0.01, beta1: 0.9, beta2: 0.999, eps: 1e-8 },
        ] {
            let c = cfg(opt);
            let back = TrainConfig::decode(&c.arch.encode_setup(), &c.encode_trainer()).unwrap();
            assert_eq!(back, c);
        }
    }

    #[test]
    fn rejects_non_finite_and_zero_batch() {
        let mut c = cfg(Optimizer::Sgd { lr: f32::NAN });
        assert!(c.validate().is_err());
        c.optimizer = Optimizer::Sgd { lr: 0.1 };
        c.batch_size = 0;
        assert!(c.validate().is_err());
    }
}
