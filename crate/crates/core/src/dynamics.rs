//! Stage transition: observation under a matching, prompt response, trust
//! accounting and relocation.

use serde::{Deserialize, Serialize};

use crate::ecosystem::{realize, EcosystemInstance, Matching, Prompt, RealizeMode, StageOutcome, TOL};
use crate::CoreError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcosystemState {
    pub locations: Vec<usize>,
    pub skill_belief: Vec<Vec<f64>>,
    pub audience_belief: Vec<Vec<f64>>,
    pub trust: Vec<f64>,
    pub stage: usize,
    /// Prompts issued in the previous stage whose trust accounting waits for
    /// the next realized audience.
    #[serde(default)]
    pub pending: Vec<Option<Prompt>>,
    /// Visit counts per (provider, point), used by the running-mean update.
    #[serde(default)]
    pub visits: Vec<Vec<u32>>,
}

impl EcosystemState {
    /// Initial beliefs and trust, each provider at its believed best response.
    pub fn initial(inst: &EcosystemInstance) -> Result<Self, CoreError> {
        inst.validate()?;
        let locations = (0..inst.num_providers())
            .map(|k| best_response(&inst.initial_skill_belief[k], &inst.initial_audience_belief[k]))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::with_locations(inst, locations))
    }

    pub fn with_locations(inst: &EcosystemInstance, locations: Vec<usize>) -> Self {
        let (k, j) = (inst.num_providers(), inst.num_content());
        EcosystemState {
            locations,
            skill_belief: inst.initial_skill_belief.clone(),
            audience_belief: inst.initial_audience_belief.clone(),
            trust: inst.initial_trust.clone(),
            stage: 0,
            pending: vec![None; k],
            visits: vec![vec![0; j]; k],
        }
    }

    pub fn num_providers(&self) -> usize {
        self.locations.len()
    }

    /// Believed reward s̃·ã of provider `k` at point `j`.
    pub fn believed(&self, k: usize, j: usize) -> f64 {
        self.skill_belief[k][j] * self.audience_belief[k][j]
    }

    fn check(&self, inst: &EcosystemInstance) -> Result<(), CoreError> {
        inst.check_locations(&self.locations)?;
        let (k, j) = (inst.num_providers(), inst.num_content());
        let shape_ok = |m: &Vec<Vec<f64>>| m.len() == k && m.iter().all(|r| r.len() == j);
        if !shape_ok(&self.skill_belief) || !shape_ok(&self.audience_belief) || self.trust.len() != k {
            return Err(CoreError::DimensionMismatch("state does not match instance".into()));
        }
        Ok(())
    }

    fn normalize_bookkeeping(&mut self, inst: &EcosystemInstance) {
        let (k, j) = (inst.num_providers(), inst.num_content());
        self.pending.resize(k, None);
        if self.visits.len() != k || self.visits.iter().any(|r| r.len() != j) {
            self.visits = vec![vec![0; j]; k];
        }
    }
}

/// Post-observation, pre-prompt state. Locations are those of the preceding
/// full state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfState {
    pub state: EcosystemState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PromptMode {
    Incremental,
    Full,
}

/// How the audience belief at the visited point absorbs the realized audience.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AudienceUpdate {
    /// Replace the belief with the realized audience.
    Collapse,
    /// Move the belief a fraction `rate` toward the realized audience.
    Smoothed(f64),
    /// Mean of all audiences realized at the point so far.
    RunningMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepOptions {
    pub realize: RealizeMode,
    pub prompt_mode: PromptMode,
    pub audience_update: AudienceUpdate,
    pub enforce_rationalizable: bool,
}

impl Default for StepOptions {
    fn default() -> Self {
        StepOptions {
            realize: RealizeMode::Expected,
            prompt_mode: PromptMode::Incremental,
            audience_update: AudienceUpdate::Collapse,
            enforce_rationalizable: false,
        }
    }
}

impl StepOptions {
    fn mode_for_stage(&self, stage: usize) -> RealizeMode {
        match self.realize {
            RealizeMode::Sampled { seed } => {
                RealizeMode::Sampled { seed: seed.wrapping_add((stage as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)) }
            }
            expected => expected,
        }
    }
}

/// Index maximizing s̃_j·ã_j, lowest index among products within [`TOL`] of
/// the maximum.
pub fn best_response(skill_belief: &[f64], audience_belief: &[f64]) -> Result<usize, CoreError> {
    if skill_belief.is_empty() {
        return Err(CoreError::EmptyCatalog);
    }
    if skill_belief.len() != audience_belief.len() {
        return Err(CoreError::DimensionMismatch("belief rows differ in length".into()));
    }
    let products: Vec<f64> = skill_belief.iter().zip(audience_belief).map(|(s, a)| s * a).collect();
    let max = products.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(products.iter().position(|&p| p >= max - TOL).unwrap_or(0))
}

/// Keeps `preferred` when it is within [`TOL`] of the best believed product,
/// otherwise the best response.
fn relocate(skill_belief: &[f64], audience_belief: &[f64], preferred: usize) -> Result<usize, CoreError> {
    let best = best_response(skill_belief, audience_belief)?;
    let max = skill_belief[best] * audience_belief[best];
    if skill_belief[preferred] * audience_belief[preferred] >= max - TOL {
        Ok(preferred)
    } else {
        Ok(best)
    }
}

pub fn collapse_skill_belief(row: &[f64], location: usize, inst: &EcosystemInstance, k: usize) -> Vec<f64> {
    let mut out = row.to_vec();
    out[location] = inst.true_skill[k][location];
    out
}

pub fn collapse_audience_belief(row: &[f64], location: usize, realized_audience: f64) -> Vec<f64> {
    let mut out = row.to_vec();
    out[location] = realized_audience;
    out
}

/// Moves the belief at the prompt target toward the commitment. Errors if the
/// commitment exceeds `audience_bound`.
pub fn apply_prompt_belief(
    row: &[f64],
    prompt: Prompt,
    trust: f64,
    mode: PromptMode,
    audience_bound: f64,
) -> Result<Vec<f64>, CoreError> {
    if prompt.target >= row.len() {
        return Err(CoreError::IndexOutOfRange { what: "prompt target", index: prompt.target, len: row.len() });
    }
    if !prompt.commitment.is_finite() || prompt.commitment < 0.0 || prompt.commitment > audience_bound + TOL {
        return Err(CoreError::InvalidValue(format!(
            "commitment {} outside [0, {audience_bound}]",
            prompt.commitment
        )));
    }
    if !(0.0..=1.0).contains(&trust) {
        return Err(CoreError::InvalidValue(format!("trust {trust}")));
    }
    let mut out = row.to_vec();
    let j = prompt.target;
    out[j] = match mode {
        PromptMode::Incremental => (1.0 - trust) * out[j] + trust * prompt.commitment,
        PromptMode::Full => prompt.commitment,
    };
    Ok(out)
}

/// Accuracy-based trust update with accuracy 1 − |C − A|/Q clipped to [0, 1].
pub fn update_trust(trust: f64, commitment: f64, audience: f64, q_count: usize, eta: f64) -> Result<f64, CoreError> {
    if q_count == 0 {
        return Err(CoreError::InvalidValue("trust update needs at least one user".into()));
    }
    if ![trust, commitment, audience, eta].iter().all(|x| x.is_finite()) || !(0.0..=1.0).contains(&trust) {
        return Err(CoreError::InvalidValue(format!("trust update inputs ({trust}, {commitment}, {audience}, {eta})")));
    }
    let acc = (1.0 - (commitment - audience).abs() / q_count as f64).clamp(0.0, 1.0);
    Ok(if acc > trust + TOL {
        (trust + eta * acc).min(1.0)
    } else if acc < trust - TOL {
        (trust - eta * acc).max(0.0)
    } else {
        trust
    })
}

/// First half of a stage: realize the matching, settle trust for last
/// stage's prompts and collapse beliefs at the visited points.
pub fn observe(
    state: &EcosystemState,
    mu: &Matching,
    inst: &EcosystemInstance,
    opts: &StepOptions,
) -> Result<(HalfState, StageOutcome), CoreError> {
    state.check(inst)?;
    let outcome = realize(mu, &state.locations, inst, opts.mode_for_stage(state.stage))?;
    let mut next = state.clone();
    next.normalize_bookkeeping(inst);
    let q = inst.num_users();
    for k in 0..inst.num_providers() {
        let loc = state.locations[k];
        let audience = outcome.audience[k];
        if let Some(p) = next.pending[k].take() {
            if p.target == loc {
                next.trust[k] = update_trust(next.trust[k], p.commitment, audience, q, inst.learning_rate[k])?;
            }
        }
        next.skill_belief[k] = collapse_skill_belief(&next.skill_belief[k], loc, inst, k);
        next.visits[k][loc] += 1;
        let old = next.audience_belief[k][loc];
        let updated = match opts.audience_update {
            AudienceUpdate::Collapse => audience,
            AudienceUpdate::Smoothed(rate) => (1.0 - rate) * old + rate * audience,
            AudienceUpdate::RunningMean => old + (audience - old) / f64::from(next.visits[k][loc]),
        };
        next.audience_belief[k][loc] = updated.clamp(0.0, inst.column_audience(loc));
    }
    Ok((HalfState { state: next }, outcome))
}

/// Second half of a stage: apply prompts to audience beliefs and move each
/// provider to a best response. A prompted provider keeps its target when the
/// target ties the best believed product; others keep their location on ties.
pub fn respond(
    half: &HalfState,
    prompts: &[Option<Prompt>],
    inst: &EcosystemInstance,
    opts: &StepOptions,
) -> Result<EcosystemState, CoreError> {
    let k_count = inst.num_providers();
    if prompts.len() != k_count {
        return Err(CoreError::DimensionMismatch(format!("{} prompts for {k_count} providers", prompts.len())));
    }
    let mut next = half.state.clone();
    next.check(inst)?;
    next.normalize_bookkeeping(inst);
    let cap = inst.audience_cap();
    for (k, prompt) in prompts.iter().enumerate() {
        let mut preferred = next.locations[k];
        if let Some(p) = *prompt {
            let mut row = apply_prompt_belief(&next.audience_belief[k], p, next.trust[k], opts.prompt_mode, cap)?;
            row[p.target] = row[p.target].clamp(0.0, inst.column_audience(p.target));
            next.audience_belief[k] = row;
            preferred = p.target;
        }
        next.pending[k] = *prompt;
        next.locations[k] = relocate(&next.skill_belief[k], &next.audience_belief[k], preferred)?;
    }
    next.stage += 1;
    Ok(next)
}

pub fn step(
    state: &EcosystemState,
    mu: &Matching,
    prompts: &[Option<Prompt>],
    inst: &EcosystemInstance,
    opts: &StepOptions,
) -> Result<(HalfState, EcosystemState, StageOutcome), CoreError> {
    if opts.enforce_rationalizable && !is_rationalizable(state)? {
        return Err(CoreError::NotRationalizable);
    }
    let (half, outcome) = observe(state, mu, inst, opts)?;
    let next = respond(&half, prompts, inst, opts)?;
    Ok((half, next, outcome))
}

/// Every provider sits at a point whose believed product is within [`TOL`] of
/// its best.
pub fn is_rationalizable(state: &EcosystemState) -> Result<bool, CoreError> {
    for (k, &loc) in state.locations.iter().enumerate() {
        let best = best_response(&state.skill_belief[k], &state.audience_belief[k])?;
        if state.believed(k, loc) < state.believed(k, best) - TOL {
            return Ok(false);
        }
    }
    Ok(true)
}

pub fn is_myopically_stable(mu: &Matching, state: &EcosystemState, inst: &EcosystemInstance) -> Result<bool, CoreError> {
    is_myopically_stable_with(mu, state, inst, &StepOptions::default())
}

/// After one unprompted observation under `mu`, every provider's current
/// location is still a best response.
pub fn is_myopically_stable_with(
    mu: &Matching,
    state: &EcosystemState,
    inst: &EcosystemInstance,
    opts: &StepOptions,
) -> Result<bool, CoreError> {
    let (half, _) = observe(state, mu, inst, opts)?;
    let s = &half.state;
    Ok((0..s.num_providers()).all(|k| {
        let here = s.believed(k, s.locations[k]);
        (0..inst.num_content()).all(|j| here >= s.believed(k, j) - TOL)
    }))
}

/// No provider relocates during `horizon` unprompted stages under the constant
/// matching `mu`. With collapsing updates beliefs stop changing after one
/// visit, so a horizon of 2 decides stability.
pub fn is_non_myopically_stable(
    mu: &Matching,
    state: &EcosystemState,
    inst: &EcosystemInstance,
    horizon: usize,
) -> Result<bool, CoreError> {
    is_non_myopically_stable_with(mu, state, inst, horizon, &StepOptions::default())
}

pub fn is_non_myopically_stable_with(
    mu: &Matching,
    state: &EcosystemState,
    inst: &EcosystemInstance,
    horizon: usize,
    opts: &StepOptions,
) -> Result<bool, CoreError> {
    let none = vec![None; inst.num_providers()];
    let mut current = state.clone();
    for _ in 0..horizon {
        let (_, next, _) = step(&current, mu, &none, inst, opts)?;
        if next.locations != current.locations {
            return Ok(false);
        }
        current = next;
    }
    Ok(true)
}
