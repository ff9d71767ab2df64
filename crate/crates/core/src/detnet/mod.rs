//! Bit-exact deterministic training of small fully connected networks.
//!
//! Arithmetic contract: binary32 storage and arithmetic, round-to-nearest-even,
//! no fused multiply-add, every reduction in ascending index order, and
//! transcendentals from [`detmath`] rather than the platform libm. Given the
//! same configuration, state and batches, any conforming implementation
//! produces the same canonical state bytes.

mod arch;
mod config;
pub mod detmath;
mod kernel;
mod prng;
mod state;

pub use arch::{Activation, ArchSpec, LayerSlot, Loss, WEIGHT_ORDER_LAYER_MAJOR};
pub use config::{Optimizer, OptimizerKind, TrainConfig, ARITHMETIC_CONTRACT};
pub use kernel::{analytic_gradient, batch_loss, gradient_check, train_range, train_step, Example};
pub use prng::{derive_seed, mix64, PrngState, GAMMA};
pub use state::{init_model, ModelState, OptState};
