//! The verifying party: complete verification (signature, tree, data
//! hashes, full replay) and partial verification of randomly sampled
//! checkpoint transitions from a disclosure bundle.
//!
//! Checks run in a fixed order and stop at the first failure.

mod complete;
mod partial;
mod plan;

pub use complete::verify_complete;
pub use partial::verify_transitions;
pub(crate) use plan::partial_shuffle;
pub use plan::{sample_transitions, AuditPlan};

use std::fmt::{self, Write as _};

use crate::attest::Mode;
use crate::dataset::decode_payload;
use crate::detnet::{train_range, Example, ModelState, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FailureCode {
    SignatureInvalid,
    TreeMismatch,
    DataHashMismatch,
    ReplayMismatch,
    MembershipFail,
    IncompleteDisclosure,
}

impl FailureCode {
    pub const ALL: [FailureCode; 6] = [
        FailureCode::SignatureInvalid,
        FailureCode::TreeMismatch,
        FailureCode::DataHashMismatch,
        FailureCode::ReplayMismatch,
        FailureCode::MembershipFail,
        FailureCode::IncompleteDisclosure,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FailureCode::SignatureInvalid => "SignatureInvalid",
            FailureCode::TreeMismatch => "TreeMismatch",
            FailureCode::DataHashMismatch => "DataHashMismatch",
            FailureCode::ReplayMismatch => "ReplayMismatch",
            FailureCode::MembershipFail => "MembershipFail",
            FailureCode::IncompleteDisclosure => "IncompleteDisclosure",
        }
    }

    /// Process exit status used by the command-line tool.
    pub fn exit_code(self) -> i32 {
        match self {
            FailureCode::SignatureInvalid => 10,
            FailureCode::TreeMismatch => 11,
            FailureCode::DataHashMismatch => 12,
            FailureCode::ReplayMismatch => 13,
            FailureCode::MembershipFail => 14,
            FailureCode::IncompleteDisclosure => 15,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }
}

impl fmt::Display for FailureCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Failure {
    pub code: FailureCode,
    /// Offending item or leaf index, when there is one.
    pub index: Option<u64>,
    pub detail: String,
}

impl Failure {
    pub fn new(code: FailureCode, detail: impl Into<String>) -> Self {
        Self { code, index: None, detail: detail.into() }
    }

    pub fn at(code: FailureCode, index: u64, detail: impl Into<String>) -> Self {
        Self { code, index: Some(index), detail: detail.into() }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CheckResult {
    /// `"1"` .. `"4"` or `"3a"`, `"3b"`, `"3c"` for transition sub-checks.
    pub id: &'static str,
    pub name: &'static str,
    pub transition: Option<u64>,
    pub outcome: Result<String, Failure>,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.outcome.is_ok()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransitionVerdict {
    pub transition: u64,
    pub failure: Option<FailureCode>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VerificationReport {
    pub mode: Mode,
    pub checks: Vec<CheckResult>,
    pub verifier_seed: Option<u64>,
    pub sampled: Vec<u64>,
    pub transitions: Vec<TransitionVerdict>,
}

impl VerificationReport {
    fn new(mode: Mode) -> Self {
        Self { mode, checks: Vec::new(), verifier_seed: None, sampled: Vec::new(), transitions: Vec::new() }
    }

    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(CheckResult::passed)
    }

    pub fn failure(&self) -> Option<(&CheckResult, &Failure)> {
        self.checks.iter().find_map(|c| c.outcome.as_ref().err().map(|f| (c, f)))
    }

    pub fn failure_code(&self) -> Option<FailureCode> {
        self.failure().map(|(_, f)| f.code)
    }

    pub fn exit_code(&self) -> i32 {
        self.failure_code().map_or(0, FailureCode::exit_code)
    }

    /// Records a check; returns `false` when it failed so callers can stop.
    fn record(
        &mut self,
        id: &'static str,
        name: &'static str,
        transition: Option<u64>,
        outcome: Result<String, Failure>,
    ) -> bool {
        let ok = outcome.is_ok();
        if let Some(j) = transition {
            match self.transitions.iter_mut().find(|t| t.transition == j) {
                Some(t) => t.failure = t.failure.or(outcome.as_ref().err().map(|f| f.code)),
                None => self
                    .transitions
                    .push(TransitionVerdict { transition: j, failure: outcome.as_ref().err().map(|f| f.code) }),
            }
        }
        self.checks.push(CheckResult { id, name, transition, outcome });
        ok
    }

    /// Human-readable lines followed by a `[machine]` section of
    /// `key=value` records with stable field names.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "mode: {}", self.mode.name());
        if let Some(seed) = self.verifier_seed {
            let _ = writeln!(s, "verifier seed: {seed}");
        }
        if !self.sampled.is_empty() {
            let _ = writeln!(s, "sampled transitions: {}", join(&self.sampled));
        }
        for c in &self.checks {
            let label = match c.transition {
                Some(j) => format!("check {} {} (transition {j})", c.id, c.name),
                None => format!("check {} {}", c.id, c.name),
            };
            match &c.outcome {
                Ok(d) => _ = writeln!(s, "{label}: pass  {d}"),
                Err(f) => _ = writeln!(s, "{label}: FAIL {}  {}", f.code, f.detail),
            }
        }
        let _ = writeln!(s, "verdict: {}", if self.passed() { "PASS" } else { "FAIL" });
        let _ = writeln!(s, "[machine]");
        for c in &self.checks {
            let (status, code, index, detail) = match &c.outcome {
                Ok(d) => ("pass", "none".to_string(), None, d.as_str()),
                Err(f) => ("fail", f.code.to_string(), f.index, f.detail.as_str()),
            };
            let _ = writeln!(
                s,
                "check={} name={} transition={} status={status} code={code} index={} detail={:?}",
                c.id,
                c.name,
                opt(c.transition),
                opt(index),
                detail
            );
        }
        let code = self.failure_code().map_or("none".to_string(), |c| c.to_string());
        let _ = writeln!(
            s,
            "verdict={} code={code} exit={}",
            if self.passed() { "pass" } else { "fail" },
            self.exit_code()
        );
        s
    }
}

fn opt(v: Option<u64>) -> String {
    v.map_or("-".into(), |v| v.to_string())
}

fn join(v: &[u64]) -> String {
    v.iter().map(u64::to_string).collect::<Vec<_>>().join(",")
}

/// Replays `batches` from `start` and compares the canonical bytes with
/// `expected`.
fn replay_matches(
    config: &TrainConfig,
    start: &ModelState,
    payload_batches: &[Vec<&[u8]>],
    expected: &[u8],
) -> Result<String, Failure> {
    let batches = payload_batches
        .iter()
        .map(|b| b.iter().map(|p| decode_payload(p)).collect::<crate::Result<Vec<Example>>>())
        .collect::<crate::Result<Vec<_>>>()
        .map_err(|e| Failure::new(FailureCode::ReplayMismatch, format!("undecodable item: {e}")))?;
    let end = train_range(start, &batches, config)
        .map_err(|e| Failure::new(FailureCode::ReplayMismatch, format!("replay failed: {e}")))?;
    let got = end.to_bytes();
    if got != expected {
        let first = got.iter().zip(expected).position(|(a, b)| a != b).unwrap_or(got.len().min(expected.len()));
        return Err(Failure::new(
            FailureCode::ReplayMismatch,
            format!(
                "replayed state differs from the claimed one at byte {first} ({} vs {} bytes)",
                got.len(),
                expected.len()
            ),
        ));
    }
    Ok(format!("{} steps reproduce the claimed state byte for byte", batches.len()))
}

#[cfg(test)]
mod tests;
