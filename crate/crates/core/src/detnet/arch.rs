use crate::codec::{Reader, Writer};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Activation {
    Identity,
    Relu,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Loss {
    /// Sum of squared output errors per item, mean over the batch.
    Mse,
    /// Cross-entropy of softmax(outputs) against a target distribution.
    SoftmaxCrossEntropy,
}

impl Activation {
    pub fn code(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Relu),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Relu => "relu",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "identity" | "linear" => Some(Activation::Identity),
            "relu" => Some(Activation::Relu),
            _ => None,
        }
    }
}

impl Loss {
    pub fn code(self) -> u8 {
        match self {
            Loss::Mse => 0,
            Loss::SoftmaxCrossEntropy => 1,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Loss::Mse),
            1 => Some(Loss::SoftmaxCrossEntropy),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Loss::Mse => "mse",
            Loss::SoftmaxCrossEntropy => "softmax_cross_entropy",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "mse" => Some(Loss::Mse),
            "softmax_cross_entropy" | "cross_entropy" => Some(Loss::SoftmaxCrossEntropy),
            _ => None,
        }
    }
}

/// Identifier of the only parameter ordering: layer by layer from the input,
/// each layer's weight matrix row-major (one row per output neuron), then that
/// layer's bias vector.
pub const WEIGHT_ORDER_LAYER_MAJOR: u8 = 1;
const ARCH_KIND_MLP: u8 = 1;

/// Fully connected network set-up. The activation applies to hidden layers;
/// the output layer is always linear and feeds the loss.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ArchSpec {
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    pub loss: Loss,
    pub bias: bool,
}

/// Position of one layer's parameters inside the flat weight vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerSlot {
    pub inputs: usize,
    pub outputs: usize,
    /// Offset of the `outputs x inputs` matrix.
    pub weights: usize,
    /// Offset of the bias vector, if the network has biases.
    pub bias: Option<usize>,
}

impl ArchSpec {
    pub fn mlp(layer_sizes: &[usize], activation: Activation, loss: Loss) -> Self {
        Self { layer_sizes: layer_sizes.to_vec(), activation, loss, bias: true }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::InvalidArchitecture(format!("need at least 2 layers, got {}", self.layer_sizes.len())));
        }
        if let Some(pos) = self.layer_sizes.iter().position(|&s| s == 0) {
            return Err(Error::InvalidArchitecture(format!("layer {pos} has size 0")));
        }
        if self.layer_sizes.iter().any(|&s| s > u32::MAX as usize) {
            return Err(Error::InvalidArchitecture("layer too large".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().expect("validated architecture")
    }

    pub fn layers(&self) -> Vec<LayerSlot> {
        let mut offset = 0;
        self.layer_sizes
            .windows(2)
            .map(|w| {
                let (inputs, outputs) = (w[0], w[1]);
                let weights = offset;
                offset += inputs * outputs;
                let bias = self.bias.then(|| {
                    let b = offset;
                    offset += outputs;
                    b
                });
                LayerSlot { inputs, outputs, weights, bias }
            })
            .collect()
    }

    /// Parameter count n.
    pub fn param_count(&self) -> usize {
        self.layer_sizes.windows(2).map(|w| w[0] * w[1] + if self.bias { w[1] } else { 0 }).sum()
    }

    /// Set-up bytes: architecture kind, layer sizes, activation, bias flag
    /// and weight ordering. The loss belongs to the trainer bytes.
    pub fn encode_setup(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u8(ARCH_KIND_MLP).u64(self.layer_sizes.len() as u64);
        for &s in &self.layer_sizes {
            w.u64(s as u64);
        }
        w.u8(self.activation.code()).u8(self.bias as u8).u8(WEIGHT_ORDER_LAYER_MAJOR);
        w.finish()
    }

    pub(crate) fn decode_setup(r: &mut Reader<'_>, loss: Loss) -> Result<Self> {
        if r.u8()? != ARCH_KIND_MLP {
            return Err(r.err("unknown architecture kind"));
        }
        let count = r.count(8)?;
        let mut layer_sizes = Vec::with_capacity(count);
        for _ in 0..count {
            layer_sizes.push(usize::try_from(r.u64()?).map_err(|_| r.err("layer size overflow"))?);
        }
        let activation = Activation::from_code(r.u8()?).ok_or_else(|| r.err("unknown activation"))?;
        let bias = match r.u8()? {
            0 => false,
            1 => true,
            _ => return Err(r.err("bad bias flag")),
        };
        if r.u8()? != WEIGHT_ORDER_LAYER_MAJOR {
            return Err(r.err("unknown weight order"));
        }
        let arch = Self { layer_sizes, activation, loss, bias };
        arch.validate()?;
        Ok(arch)
    }
}
