use crate::detnet::PrngState;
use crate::{Error, Result};

/// Transitions `j -> j+1` (0-based, `j < m`) selected for checking.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AuditPlan {
    pub m: u64,
    pub v: u64,
    pub verifier_seed: u64,
    /// Ascending and distinct.
    pub sampled: Vec<u64>,
}

impl AuditPlan {
    /// A plan with an explicit transition list.
    pub fn from_indices(m: u64, mut sampled: Vec<u64>) -> Result<Self> {
        sampled.sort_unstable();
        sampled.dedup();
        if sampled.iter().any(|&j| j >= m) {
            return Err(Error::InvalidInput(format!("transition index outside 0..{m}")));
        }
        Ok(Self { m, v: sampled.len() as u64, verifier_seed: 0, sampled })
    }

    /// `m=.. v=.. seed=.. sampled=a,b,c`
    pub fn to_text(&self) -> String {
        let list = self.sampled.iter().map(u64::to_string).collect::<Vec<_>>().join(",");
        format!("m={} v={} seed={} sampled={list}\n", self.m, self.v, self.verifier_seed)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |d: &str| Error::malformed("audit plan", d.to_string());
        let (mut m, mut v, mut seed, mut sampled) = (None, None, None, None);
        for field in text.split_whitespace() {
            let (k, val) = field.split_once('=').ok_or_else(|| bad(field))?;
            let num = |s: &str| s.parse::<u64>().map_err(|_| bad(field));
            match k {
                "m" => m = Some(num(val)?),
                "v" => v = Some(num(val)?),
                "seed" => seed = Some(num(val)?),
                "sampled" => {
                    sampled = Some(val.split(',').filter(|s| !s.is_empty()).map(num).collect::<Result<Vec<_>>>()?)
                }
                _ => return Err(bad(field)),
            }
        }
        let (m, v, seed, sampled) = (
            m.ok_or_else(|| bad("missing m"))?,
            v.ok_or_else(|| bad("missing v"))?,
            seed.ok_or_else(|| bad("missing seed"))?,
            sampled.ok_or_else(|| bad("missing sampled"))?,
        );
        let mut plan = Self::from_indices(m, sampled)?;
        if plan.v != v {
            return Err(bad("v does not match the sampled list"));
        }
        plan.verifier_seed = seed;
        Ok(plan)
    }
}

/// Uniform sample of `v` of the `m` transitions without replacement: the
/// first `v` steps of a Fisher-Yates shuffle driven by SplitMix64 seeded
/// with the verifier's seed.
pub fn sample_transitions(m: u64, v: u64, verifier_seed: u64) -> Result<AuditPlan> {
    if v == 0 || v > m {
        return Err(Error::InvalidInput(format!("need 1 <= v <= m, got v={v}, m={m}")));
    }
    let mut rng = PrngState::new(verifier_seed);
    let mut sampled = partial_shuffle(&mut rng, m, v);
    sampled.sort_unstable();
    Ok(AuditPlan { m, v, verifier_seed, sampled })
}

/// First `v` entries of a Fisher-Yates shuffle of `0..m`. Only touched
/// positions are materialised, so `m` may be large.
pub(crate) fn partial_shuffle(rng: &mut PrngState, m: u64, v: u64) -> Vec<u64> {
    let mut moved = std::collections::HashMap::new();
    let mut out = Vec::with_capacity(v as usize);
    for i in 0..v {
        let j = i + rng.below(m - i);
        let at_j = *moved.get(&j).unwrap_or(&j);
        let at_i = *moved.get(&i).unwrap_or(&i);
        moved.insert(j, at_i);
        out.push(at_j);
    }
    out
}
