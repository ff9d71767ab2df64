//! Deterministic training attestation.
//!
//! A training run of a small multilayer perceptron is made bit-exactly
//! reproducible ([`detnet`]), committed to a signed hash tree ([`attest`],
//! [`merkle`]) and later checked by an independent party, either by replaying
//! the whole run or a random sample of checkpoint transitions ([`verify`]).
//! [`auditsim`] quantifies how likely manipulated transitions are to slip
//! through a sampled audit.

pub mod attest;
pub mod auditsim;
pub mod cli;
pub mod codec;
pub mod dataset;
pub mod detnet;
mod error;
pub mod merkle;
pub mod run;
pub mod verify;

pub use error::{Error, Result};
