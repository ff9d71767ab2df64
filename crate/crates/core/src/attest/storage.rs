use crate::detnet::OptimizerKind;
use crate::merkle::node_count;
use crate::{Error, Result};

/// Storage cost of keeping `m` checkpoints with their hash trees.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StorageEstimate {
    /// Stored values per checkpoint: `n`, or `2n` with optimiser state.
    pub stored_values: u64,
    /// Payload bytes of one checkpoint.
    pub per_checkpoint_bytes: u64,
    /// Internal-node digests of one checkpoint's tree, in bytes.
    pub tree_bytes: u64,
    /// The level directly above the leaves, in bytes.
    pub penultimate_level_bytes: u64,
    /// `m * (payload + tree)`.
    pub total_bytes: u64,
    /// `m * (payload + max(payload, tree))`.
    pub total_bound_bytes: u64,
}

/// Closed-form storage estimate for one value per leaf. Momentum and Adam
/// count the stored values twice.
pub fn estimate_storage(
    n_params: u64,
    m: u64,
    hash_arity: u64,
    optimizer: OptimizerKind,
    bytes_per_param: u64,
    digest_len: u64,
) -> Result<StorageEstimate> {
    if hash_arity < 2 {
        return Err(Error::InvalidInput(format!("arity {hash_arity}")));
    }
    let mult = match optimizer {
        OptimizerKind::Sgd => 1,
        OptimizerKind::Momentum | OptimizerKind::Adam => 2,
    };
    let overflow = || Error::InvalidInput("storage estimate overflows u64".into());
    let stored_values = n_params.checked_mul(mult).ok_or_else(overflow)?;
    let per_checkpoint_bytes = stored_values.checked_mul(bytes_per_param).ok_or_else(overflow)?;
    let tree_bytes = node_count(stored_values, hash_arity).checked_mul(digest_len).ok_or_else(overflow)?;
    let penultimate_level_bytes = stored_values.div_ceil(hash_arity).checked_mul(digest_len).ok_or_else(overflow)?;
    let total_bytes =
        per_checkpoint_bytes.checked_add(tree_bytes).and_then(|c| c.checked_mul(m)).ok_or_else(overflow)?;
    let total_bound_bytes = per_checkpoint_bytes
        .checked_add(per_checkpoint_bytes.max(tree_bytes))
        .and_then(|c| c.checked_mul(m))
        .ok_or_else(overflow)?;
    Ok(StorageEstimate {
        stored_values,
        per_checkpoint_bytes,
        tree_bytes,
        penultimate_level_bytes,
        total_bytes,
        total_bound_bytes,
    })
}
