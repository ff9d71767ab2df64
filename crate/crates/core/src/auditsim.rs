//! Security analysis of sampled audits: exact and approximate escape
//! probabilities and Monte Carlo simulations of three attacks.
//!
//! An attacker manipulates `a` of the `m` checkpoint transitions; the
//! verifier checks `v` of them. The attack escapes when no manipulated
//! transition is checked.

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::detnet::{derive_seed, PrngState};
use crate::verify::partial_shuffle;
use crate::{Error, Result};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

fn check_params(m: u64, v: u64, a: u64) -> Result<()> {
    if a > m || v == 0 || v > m {
        return Err(Error::InvalidInput(format!("need 0 <= a <= m and 1 <= v <= m, got m={m}, v={v}, a={a}")));
    }
    Ok(())
}

/// `prod_{i<v} (1 - a / (m - i))`, the chance that none of `a` manipulated
/// transitions is among `v` drawn without replacement.
pub fn escape_probability_exact(m: u64, v: u64, a: u64) -> Result<f64> {
    check_params(m, v, a)?;
    Ok((0..v).map(|i| (m - i).saturating_sub(a) as f64 / (m - i) as f64).product())
}

/// `exp(-a v / m)`.
pub fn escape_probability_approx(m: u64, v: u64, a: u64) -> f64 {
    if m == 0 {
        return 1.0;
    }
    (-(a as f64) * v as f64 / m as f64).exp()
}

/// Wilson score interval for `successes` out of `trials` at quantile `z`.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = z / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttackKind {
    DataSubstitution,
    StepCountLie,
    Leveling,
}

impl AttackKind {
    pub fn name(self) -> &'static str {
        match self {
            AttackKind::DataSubstitution => "data_substitution",
            AttackKind::StepCountLie => "step_count_lie",
            AttackKind::Leveling => "leveling",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [AttackKind::DataSubstitution, AttackKind::StepCountLie, AttackKind::Leveling]
            .into_iter()
            .find(|k| k.name() == s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sampler {
    Uniform,
    /// Favours transitions whose weight change stands out: each transition
    /// gets weight `exp(z)` for its standardised delta `z`, and `v` are drawn
    /// without replacement proportionally to weight.
    WeightDeltaHeuristic,
}

impl Sampler {
    pub fn name(self) -> &'static str {
        match self {
            Sampler::Uniform => "uniform",
            Sampler::WeightDeltaHeuristic => "heuristic",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Sampler::Uniform, Sampler::WeightDeltaHeuristic].into_iter().find(|k| k.name() == s)
    }
}

/// Synthetic per-transition weight-delta magnitudes: honest transitions
/// draw from `N(mean, sd)`; an unleveled manipulation adds `anomaly * sd`
/// to the targeted transition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeltaProfile {
    pub mean: f64,
    pub sd: f64,
    pub anomaly: f64,
}

impl Default for DeltaProfile {
    fn default() -> Self {
        Self { mean: 1.0, sd: 0.1, anomaly: 4.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttackScenario {
    pub m: u64,
    pub a: u64,
    pub kind: AttackKind,
    /// First manipulated transition; the others are the following `a - 1`
    /// (wrapping around at `m`).
    pub target: u64,
    /// Leveling only: whether the attacker spreads the change so that every
    /// manipulated delta looks honest.
    pub leveled: bool,
    pub profile: DeltaProfile,
}

impl AttackScenario {
    pub fn new(m: u64, a: u64, kind: AttackKind) -> Result<Self> {
        if a == 0 || a > m {
            return Err(Error::InvalidInput(format!("need 1 <= a <= m, got a={a}, m={m}")));
        }
        Ok(Self { m, a, kind, target: 0, leveled: false, profile: DeltaProfile::default() })
    }

    pub fn data_substitution(m: u64, a: u64) -> Result<Self> {
        Self::new(m, a, AttackKind::DataSubstitution)
    }

    /// One transition whose recorded step count understates the steps
    /// actually taken.
    pub fn step_count_lie(m: u64) -> Result<Self> {
        Self::new(m, 1, AttackKind::StepCountLie)
    }

    pub fn leveling(m: u64, a: u64, target: u64, leveled: bool, profile: DeltaProfile) -> Result<Self> {
        let mut s = Self::new(m, a, AttackKind::Leveling)?;
        if target >= m {
            return Err(Error::InvalidInput(format!("target {target} outside 0..{m}")));
        }
        s.target = target;
        s.leveled = leveled;
        s.profile = profile;
        Ok(s)
    }

    pub fn manipulated(&self) -> Vec<bool> {
        let mut hit = vec![false; self.m as usize];
        for k in 0..self.a {
            hit[((self.target + k) % self.m) as usize] = true;
        }
        hit
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AuditOutcome {
    pub trials: u64,
    pub detections: u64,
    pub detection_rate: f64,
    pub escape_rate: f64,
    /// Wilson 95% interval of the escape rate.
    pub ci_low: f64,
    pub ci_high: f64,
}

impl AuditOutcome {
    fn from_counts(trials: u64, detections: u64) -> Self {
        let escapes = trials - detections;
        let (ci_low, ci_high) = wilson_interval(escapes, trials, Z95);
        Self {
            trials,
            detections,
            detection_rate: detections as f64 / trials as f64,
            escape_rate: escapes as f64 / trials as f64,
            ci_low,
            ci_high,
        }
    }
}

fn run_trials(trials: u64, seed: u64, detect: impl Fn(&mut PrngState) -> bool + Sync) -> Result<AuditOutcome> {
    if trials == 0 {
        return Err(Error::InvalidInput("need at least one trial".into()));
    }
    let detections =
        (0..trials).into_par_iter().filter(|&t| detect(&mut PrngState::new(derive_seed(seed, t)))).count() as u64;
    Ok(AuditOutcome::from_counts(trials, detections))
}

fn uniform_hits(rng: &mut PrngState, manipulated: &[bool], v: u64) -> bool {
    partial_shuffle(rng, manipulated.len() as u64, v).iter().any(|&j| manipulated[j as usize])
}

/// Uniform audit against `scenario.a` manipulated transitions. Each trial
/// draws its own plan on the sub-stream `derive_seed(seed, trial)`.
pub fn simulate_uniform_audit(scenario: &AttackScenario, v: u64, trials: u64, seed: u64) -> Result<AuditOutcome> {
    check_params(scenario.m, v, scenario.a)?;
    let manipulated = scenario.manipulated();
    run_trials(trials, seed, |rng| uniform_hits(rng, &manipulated, v))
}

/// A transition records fewer steps than were trained. Its endpoints are
/// genuine checkpoints and its index slice matches the recorded count, so
/// every static check passes; only replaying that transition reveals the
/// extra steps. Detection therefore happens exactly when it is sampled.
pub fn simulate_step_count_attack(scenario: &AttackScenario, v: u64, trials: u64, seed: u64) -> Result<AuditOutcome> {
    if scenario.kind != AttackKind::StepCountLie {
        return Err(Error::InvalidInput("scenario is not a step-count lie".into()));
    }
    check_params(scenario.m, v, scenario.a)?;
    let recorded_steps = 1u64;
    let real_steps: Vec<u64> = scenario.manipulated().iter().map(|&lie| recorded_steps + lie as u64).collect();
    run_trials(trials, seed, |rng| {
        partial_shuffle(rng, scenario.m, v).iter().any(|&j| real_steps[j as usize] != recorded_steps)
    })
}

/// Weight-delta profile of one trial.
fn draw_deltas(rng: &mut PrngState, scenario: &AttackScenario, manipulated: &[bool]) -> Vec<f64> {
    let p = scenario.profile;
    let normal = Normal::new(p.mean, p.sd).expect("finite profile");
    let mut deltas: Vec<f64> = (0..scenario.m).map(|_| normal.sample(rng)).collect();
    if !scenario.leveled {
        deltas[scenario.target as usize] += p.anomaly * p.sd;
    }
    debug_assert!(manipulated[scenario.target as usize]);
    deltas
}

/// Efraimidis-Spirakis weighted sampling without replacement with weights
/// `exp(z)` of the standardised deltas.
fn heuristic_sample(rng: &mut PrngState, deltas: &[f64], v: u64) -> Vec<u64> {
    let n = deltas.len() as f64;
    let mean = deltas.iter().sum::<f64>() / n;
    let sd = (deltas.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n).sqrt();
    let mut keys: Vec<(f64, u64)> = deltas
        .iter()
        .enumerate()
        .map(|(j, d)| {
            let z = if sd > 0.0 { (d - mean) / sd } else { 0.0 };
            let u = 1.0 - rng.next_unit_f64();
            (u.ln() / z.exp(), j as u64)
        })
        .collect();
    let v = v as usize;
    keys.select_nth_unstable_by(v - 1, |x, y| y.0.total_cmp(&x.0));
    keys[..v].iter().map(|k| k.1).collect()
}

/// Leveling attack: a delta profile is drawn per trial, then the chosen
/// sampler picks `v` transitions.
pub fn simulate_leveling_attack(
    scenario: &AttackScenario,
    v: u64,
    trials: u64,
    seed: u64,
    sampler: Sampler,
) -> Result<AuditOutcome> {
    if scenario.kind != AttackKind::Leveling {
        return Err(Error::InvalidInput("scenario is not a leveling attack".into()));
    }
    check_params(scenario.m, v, scenario.a)?;
    let manipulated = scenario.manipulated();
    run_trials(trials, seed, |rng| {
        let deltas = draw_deltas(rng, scenario, &manipulated);
        match sampler {
            Sampler::Uniform => uniform_hits(rng, &manipulated, v),
            Sampler::WeightDeltaHeuristic => heuristic_sample(rng, &deltas, v).iter().any(|&j| manipulated[j as usize]),
        }
    })
}

/// One row of simulation output.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulationRow {
    pub m: u64,
    pub v: u64,
    pub a: u64,
    pub kind: AttackKind,
    pub sampler: Sampler,
    pub exact_p: f64,
    pub approx_p: f64,
    pub outcome: AuditOutcome,
    pub seed: u64,
}

impl SimulationRow {
    pub const CSV_HEADER: &'static str =
        "m,v,a,kind,sampler,exact_p,approx_p,empirical_escape,ci_low,ci_high,trials,seed";

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{},{}",
            self.m,
            self.v,
            self.a,
            self.kind.name(),
            self.sampler.name(),
            self.exact_p,
            self.approx_p,
            self.outcome.escape_rate,
            self.outcome.ci_low,
            self.outcome.ci_high,
            self.outcome.trials,
            self.seed
        )
    }
}

/// Runs `scenario` with the simulation matching its kind.
pub fn simulate(scenario: &AttackScenario, v: u64, trials: u64, seed: u64, sampler: Sampler) -> Result<SimulationRow> {
    let outcome = match scenario.kind {
        AttackKind::DataSubstitution => simulate_uniform_audit(scenario, v, trials, seed)?,
        AttackKind::StepCountLie => simulate_step_count_attack(scenario, v, trials, seed)?,
        AttackKind::Leveling => simulate_leveling_attack(scenario, v, trials, seed, sampler)?,
    };
    let sampler = if scenario.kind == AttackKind::Leveling { sampler } else { Sampler::Uniform };
    Ok(SimulationRow {
        m: scenario.m,
        v,
        a: scenario.a,
        kind: scenario.kind,
        sampler,
        exact_p: escape_probability_exact(scenario.m, v, scenario.a)?,
        approx_p: escape_probability_approx(scenario.m, v, scenario.a),
        outcome,
        seed,
    })
}
