//! Forward pass, backpropagation and optimiser updates.
//!
//! The arithmetic is generic over [`Real`] so the same code path runs in
//! binary32 (training and replay) and binary64 (gradient checking). All sums
//! start from zero and accumulate in ascending index order; products are
//! never fused.

use std::ops::{Add, Div, Mul, Neg, Sub};

use super::arch::{Activation, ArchSpec, Loss};
use super::config::{Optimizer, TrainConfig};
use super::detmath::{det_exp, det_ln, det_powu};
use super::state::{ModelState, OptState};
use crate::{Error, Result};

/// One training item: input vector and target vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub input: Vec<f32>,
    pub target: Vec<f32>,
}

pub(crate) trait Real:
    Copy
    + PartialOrd
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    const ZERO: Self;
    const ONE: Self;
    fn from_f32(x: f32) -> Self;
    fn from_usize(x: usize) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
}

impl Real for f32 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;
    fn from_f32(x: f32) -> Self {
        x
    }
    fn from_usize(x: usize) -> Self {
        x as f32
    }
    fn exp(self) -> Self {
        det_exp(self)
    }
    fn ln(self) -> Self {
        det_ln(self)
    }
}

impl Real for f64 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;
    fn from_f32(x: f32) -> Self {
        x as f64
    }
    fn from_usize(x: usize) -> Self {
        x as f64
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
}

fn check_dims(arch: &ArchSpec, batch: &[Example]) -> Result<()> {
    for (i, ex) in batch.iter().enumerate() {
        if ex.input.len() != arch.input_dim() || ex.target.len() != arch.output_dim() {
            return Err(Error::DimensionMismatch(format!(
                "batch item {i}: input {} / target {}, network expects {} / {}",
                ex.input.len(),
                ex.target.len(),
                arch.input_dim(),
                arch.output_dim()
            )));
        }
    }
    Ok(())
}

/// Forward pass for one item. Returns the pre-activations of every layer and
/// the (post-activation) layer inputs; `inputs[0]` is the item itself.
fn forward<R: Real>(arch: &ArchSpec, w: &[R], x: &[R]) -> (Vec<Vec<R>>, Vec<Vec<R>>) {
    let slots = arch.layers();
    let last = slots.len() - 1;
    let mut inputs = vec![x.to_vec()];
    let mut pre = Vec::with_capacity(slots.len());
    for (l, slot) in slots.iter().enumerate() {
        let a = &inputs[l];
        let z: Vec<R> = (0..slot.outputs)
            .map(|o| {
                let row = &w[slot.weights + o * slot.inputs..slot.weights + (o + 1) * slot.inputs];
                let mut acc = R::ZERO;
                for (wi, ai) in row.iter().zip(a) {
                    acc = acc + *wi * *ai;
                }
                match slot.bias {
                    Some(b) => acc + w[b + o],
                    None => acc,
                }
            })
            .collect();
        if l < last {
            inputs.push(z.iter().map(|&v| activate(arch.activation, v)).collect());
        }
        pre.push(z);
    }
    (pre, inputs)
}

#[inline]
fn activate<R: Real>(act: Activation, v: R) -> R {
    match act {
        Activation::Identity => v,
        Activation::Relu => {
            if v > R::ZERO {
                v
            } else {
                R::ZERO
            }
        }
    }
}

/// Derivative factor; relu'(0) = 0.
#[inline]
fn activate_grad<R: Real>(act: Activation, z: R, upstream: R) -> R {
    match act {
        Activation::Identity => upstream,
        Activation::Relu => {
            if z > R::ZERO {
                upstream
            } else {
                R::ZERO
            }
        }
    }
}

/// Loss of one item and its derivative with respect to the output layer.
fn loss_and_delta<R: Real>(loss: Loss, out: &[R], target: &[R]) -> (R, Vec<R>) {
    match loss {
        Loss::Mse => {
            let two = R::ONE + R::ONE;
            let mut l = R::ZERO;
            let mut delta = Vec::with_capacity(out.len());
            for (o, t) in out.iter().zip(target) {
                let diff = *o - *t;
                l = l + diff * diff;
                delta.push(two * diff);
            }
            (l, delta)
        }
        Loss::SoftmaxCrossEntropy => {
            let mut mx = out[0];
            for &o in &out[1..] {
                if o > mx {
                    mx = o;
                }
            }
            let e: Vec<R> = out.iter().map(|&o| (o - mx).exp()).collect();
            let mut sum = R::ZERO;
            for &v in &e {
                sum = sum + v;
            }
            let mut tsum = R::ZERO;
            for &t in target {
                tsum = tsum + t;
            }
            let lse = mx + sum.ln();
            let mut l = R::ZERO;
            for (o, t) in out.iter().zip(target) {
                l = l + *t * (lse - *o);
            }
            let delta = e.iter().zip(target).map(|(ev, t)| (*ev / sum) * tsum - *t).collect();
            (l, delta)
        }
    }
}

/// Mean loss over the batch and the gradient of that mean, L2 term included.
pub(crate) fn loss_and_gradient<R: Real>(arch: &ArchSpec, w: &[R], batch: &[Example], l2: R) -> (R, Vec<R>) {
    let slots = arch.layers();
    let mut gsum = vec![R::ZERO; w.len()];
    let mut lsum = R::ZERO;
    for ex in batch {
        let x: Vec<R> = ex.input.iter().map(|&v| R::from_f32(v)).collect();
        let t: Vec<R> = ex.target.iter().map(|&v| R::from_f32(v)).collect();
        let (pre, inputs) = forward(arch, w, &x);
        let (l, mut delta) = loss_and_delta(arch.loss, pre.last().unwrap(), &t);
        lsum = lsum + l;
        for (li, slot) in slots.iter().enumerate().rev() {
            let a = &inputs[li];
            for o in 0..slot.outputs {
                let base = slot.weights + o * slot.inputs;
                for i in 0..slot.inputs {
                    gsum[base + i] = gsum[base + i] + delta[o] * a[i];
                }
                if let Some(b) = slot.bias {
                    gsum[b + o] = gsum[b + o] + delta[o];
                }
            }
            if li > 0 {
                let zprev = &pre[li - 1];
                delta = (0..slot.inputs)
                    .map(|i| {
                        let mut acc = R::ZERO;
                        for (o, d) in delta.iter().enumerate() {
                            acc = acc + w[slot.weights + o * slot.inputs + i] * *d;
                        }
                        activate_grad(arch.activation, zprev[i], acc)
                    })
                    .collect();
            }
        }
    }
    let bsz = R::from_usize(batch.len());
    let mut loss = lsum / bsz;
    let mut grad: Vec<R> = gsum.into_iter().map(|g| g / bsz).collect();
    // skipped entirely at zero so the unregularised path is reproduced bit for bit
    if l2 != R::ZERO {
        let half = R::ONE / (R::ONE + R::ONE);
        let mut sq = R::ZERO;
        for (g, wk) in grad.iter_mut().zip(w) {
            *g = *g + l2 * *wk;
            sq = sq + *wk * *wk;
        }
        loss = loss + half * l2 * sq;
    }
    (loss, grad)
}

/// Applies one training step to `state` with the given batch.
pub fn train_step(state: &ModelState, batch: &[Example], config: &TrainConfig) -> Result<ModelState> {
    let arch = &config.arch;
    if batch.len() != config.batch_size {
        return Err(Error::DimensionMismatch(format!(
            "batch has {} items, batch size is {}",
            batch.len(),
            config.batch_size
        )));
    }
    if state.weights.len() != arch.param_count() {
        return Err(Error::DimensionMismatch(format!(
            "state has {} parameters, architecture needs {}",
            state.weights.len(),
            arch.param_count()
        )));
    }
    if state.opt.kind() != config.optimizer.kind() {
        return Err(Error::InvalidInput(format!(
            "optimizer state is {}, configuration uses {}",
            state.opt.kind().name(),
            config.optimizer.kind().name()
        )));
    }
    check_dims(arch, batch)?;

    let step = state.step_index;
    let (loss, grad) = loss_and_gradient::<f32>(arch, &state.weights, batch, config.l2);
    if !loss.is_finite() {
        return Err(Error::NonFinite { step, what: "loss" });
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite { step, what: "gradient" });
    }

    let mut next = state.clone();
    next.step_index = step + 1;
    match (config.optimizer, &mut next.opt) {
        (Optimizer::Sgd { lr }, OptState::Sgd) => {
            for (w, g) in next.weights.iter_mut().zip(&grad) {
                *w -= lr * *g;
            }
        }
        (Optimizer::Momentum { lr, mu }, OptState::Momentum { velocity }) => {
            for ((w, v), g) in next.weights.iter_mut().zip(velocity.iter_mut()).zip(&grad) {
                *v = mu * *v + *g;
                *w -= lr * *v;
            }
        }
        (Optimizer::Adam { lr, beta1, beta2, eps }, OptState::Adam { m, v }) => {
            let t = step + 1;
            let c1 = 1.0 - det_powu(beta1, t);
            let c2 = 1.0 - det_powu(beta2, t);
            let (k1, k2) = (1.0 - beta1, 1.0 - beta2);
            for (((w, mk), vk), g) in next.weights.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(&grad) {
                *mk = beta1 * *mk + k1 * *g;
                *vk = beta2 * *vk + k2 * (*g * *g);
                let mhat = *mk / c1;
                let vhat = *vk / c2;
                *w -= (lr * mhat) / (vhat.sqrt() + eps);
            }
        }
        _ => unreachable!("optimizer kinds checked above"),
    }
    if next.weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::NonFinite { step, what: "weights" });
    }
    Ok(next)
}

/// Left fold of [`train_step`] over consecutive batches.
pub fn train_range<B: AsRef<[Example]>>(state: &ModelState, batches: &[B], config: &TrainConfig) -> Result<ModelState> {
    let mut cur = state.clone();
    for batch in batches {
        let step = cur.step_index;
        cur = train_step(&cur, batch.as_ref(), config).map_err(|e| match e {
            e @ Error::NonFinite { .. } => e,
            other => Error::Step { step, source: Box::new(other) },
        })?;
    }
    Ok(cur)
}

/// Gradient of the mean batch loss evaluated in binary64.
pub fn analytic_gradient(state: &ModelState, batch: &[Example], config: &TrainConfig) -> Result<Vec<f64>> {
    check_dims(&config.arch, batch)?;
    let w: Vec<f64> = state.weights.iter().map(|&v| v as f64).collect();
    Ok(loss_and_gradient::<f64>(&config.arch, &w, batch, config.l2 as f64).1)
}

pub fn batch_loss(state: &ModelState, batch: &[Example], config: &TrainConfig) -> Result<f64> {
    check_dims(&config.arch, batch)?;
    let w: Vec<f64> = state.weights.iter().map(|&v| v as f64).collect();
    Ok(loss_and_gradient::<f64>(&config.arch, &w, batch, config.l2 as f64).0)
}

/// Compares backpropagation against central finite differences with step
/// `eps`, both in binary64. Returns `max_k |g_k - fd_k| / max(|g|_inf, |fd|_inf, 1e-8)`.
pub fn gradient_check(state: &ModelState, batch: &[Example], config: &TrainConfig, eps: f64) -> Result<f64> {
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::InvalidInput(format!("finite-difference step {eps}")));
    }
    let analytic = analytic_gradient(state, batch, config)?;
    let arch = &config.arch;
    let l2 = config.l2 as f64;
    let mut w: Vec<f64> = state.weights.iter().map(|&v| v as f64).collect();
    let mut fd = Vec::with_capacity(w.len());
    for k in 0..w.len() {
        let orig = w[k];
        w[k] = orig + eps;
        let up = loss_and_gradient::<f64>(arch, &w, batch, l2).0;
        w[k] = orig - eps;
        let down = loss_and_gradient::<f64>(arch, &w, batch, l2).0;
        w[k] = orig;
        fd.push((up - down) / (2.0 * eps));
    }
    let scale = analytic.iter().chain(&fd).fold(1e-8f64, |acc, v| acc.max(v.abs()));
    Ok(analytic.iter().zip(&fd).map(|(a, f)| (a - f).abs()).fold(0.0, f64::max) / scale)
}
