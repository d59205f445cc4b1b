//! Single-provider prompting: the no-prompt baseline, the minimum incentive
//! and the two-phase trust-building policies.

use serde::{Deserialize, Serialize};

use crate::dynamics::{observe, respond, AudienceUpdate, EcosystemState, PromptMode, StepOptions};
use crate::ecosystem::{
    matching_value, natural_matching, realize, EcosystemInstance, Matching, Prompt, RealizeMode, StageOutcome, TOL,
};
use crate::CoreError;

/// Safety cap on policy rounds.
pub const DEFAULT_MAX_ROUNDS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Incentive {
    Commitment(f64),
    /// The point is already a believed best response.
    NoIncentiveNeeded,
}

impl Incentive {
    pub fn commitment(self) -> f64 {
        match self {
            Incentive::Commitment(c) => c,
            Incentive::NoIncentiveNeeded => 0.0,
        }
    }
}

/// Smallest commitment at `j` that makes `j` a believed best response for a
/// provider with trust `trust` under the incremental prompt update.
pub fn min_incentive_phi(
    j: usize,
    trust: f64,
    skill_belief: &[f64],
    audience_belief: &[f64],
) -> Result<Incentive, CoreError> {
    if j >= skill_belief.len() || skill_belief.len() != audience_belief.len() {
        return Err(CoreError::IndexOutOfRange { what: "content", index: j, len: skill_belief.len() });
    }
    if !(trust > 0.0) {
        return Err(CoreError::Uninfluenceable(j));
    }
    let own = skill_belief[j] * audience_belief[j];
    let best_rival = skill_belief
        .iter()
        .zip(audience_belief)
        .map(|(s, a)| s * a)
        .filter(|&p| p > own)
        .fold(None, |m: Option<f64>, p| Some(m.map_or(p, |m| m.max(p))));
    let Some(rival) = best_rival else {
        return Ok(Incentive::NoIncentiveNeeded);
    };
    if skill_belief[j] <= 0.0 {
        return Err(CoreError::Unincentivizable(j));
    }
    // (1/λ)(P/s − (1−λ)a) rearranged as (P/s − a)/λ + a: the numerator does
    // not depend on λ, so the result is monotone in λ in floating point too.
    let gap = (rival / skill_belief[j] - audience_belief[j]).max(0.0);
    Ok(Incentive::Commitment(gap / trust + audience_belief[j]))
}

/// Utility E_{k,j} that provider `k` would receive at each point `j` under
/// the natural matching, other providers staying at `locations`.
pub fn fixed_matching_utilities(
    inst: &EcosystemInstance,
    k: usize,
    locations: &[usize],
) -> Result<Vec<f64>, CoreError> {
    inst.check_locations(locations)?;
    (0..inst.num_content())
        .map(|j| {
            let mut at = locations.to_vec();
            at[k] = j;
            let mu = natural_matching(&at, inst)?;
            Ok(realize(&mu, &at, inst, RealizeMode::Expected)?.utility[k])
        })
        .collect()
}

/// Points whose believed reward exceeds their utility and that no other point
/// beats on both counts.
pub fn undominated_overestimates(skill_belief: &[f64], audience_belief: &[f64], utilities: &[f64]) -> Vec<usize> {
    let believed: Vec<f64> = skill_belief.iter().zip(audience_belief).map(|(s, a)| s * a).collect();
    (0..utilities.len())
        .filter(|&j| believed[j] > utilities[j] + TOL)
        .filter(|&j| {
            !(0..utilities.len()).any(|jp| believed[jp] > utilities[j] + TOL && utilities[jp] > utilities[j] + TOL)
        })
        .collect()
}

/// Points an unprompted provider visits under collapsing updates with fixed
/// utilities: scanning points by decreasing believed reward, a point is
/// visited unless an earlier point's utility already matches its belief.
/// Returns the visited points in visiting order and the resting point.
pub fn exploration_set(believed: &[f64], utilities: &[f64]) -> (Vec<usize>, usize) {
    let mut order: Vec<usize> = (0..believed.len()).collect();
    order.sort_by(|&a, &b| believed[b].total_cmp(&believed[a]).then(a.cmp(&b)));
    let mut visited = Vec::new();
    let mut best_seen = f64::NEG_INFINITY;
    for &j in &order {
        if best_seen >= believed[j] - TOL {
            break;
        }
        visited.push(j);
        best_seen = best_seen.max(utilities[j]);
    }
    // The last point keeps the provider on ties; otherwise it returns to the
    // lowest-index point with the best utility seen.
    let rest = match visited.last() {
        Some(&last) if utilities[last] >= best_seen - TOL => last,
        _ => (0..believed.len()).find(|&j| visited.contains(&j) && utilities[j] >= best_seen - TOL).unwrap_or(0),
    };
    (visited, rest)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoPromptRun {
    /// Provider `k`'s location at each stage, starting with the initial one.
    pub locations: Vec<usize>,
    pub equilibrium: usize,
    pub final_state: EcosystemState,
}

impl NoPromptRun {
    /// Distinct locations in order of first visit.
    pub fn visited(&self) -> Vec<usize> {
        let mut seen = Vec::new();
        for &l in &self.locations {
            if !seen.contains(&l) {
                seen.push(l);
            }
        }
        seen
    }

    pub fn relocations(&self) -> usize {
        self.locations.windows(2).filter(|w| w[0] != w[1]).count()
    }
}

/// Unprompted best-response dynamics for provider `k` under the natural
/// matching, the other providers pinned to their locations, until `k` stays
/// put for one stage.
pub fn simulate_no_prompt(
    inst: &EcosystemInstance,
    k: usize,
    state: &EcosystemState,
    max_steps: usize,
) -> Result<NoPromptRun, CoreError> {
    let opts = StepOptions { audience_update: AudienceUpdate::Collapse, ..StepOptions::default() };
    let none = vec![None; inst.num_providers()];
    let mut current = state.clone();
    let mut locations = vec![current.locations[k]];
    for _ in 0..max_steps {
        let mu = natural_matching(&current.locations, inst)?;
        let (half, _) = observe(&current, &mu, inst, &opts)?;
        let mut next = respond(&half, &none, inst, &opts)?;
        for (p, loc) in next.locations.iter_mut().enumerate() {
            if p != k {
                *loc = current.locations[p];
            }
        }
        let moved = next.locations[k] != current.locations[k];
        locations.push(next.locations[k]);
        current = next;
        if !moved {
            return Ok(NoPromptRun { locations, equilibrium: current.locations[k], final_state: current });
        }
    }
    Err(CoreError::NoTermination(max_steps))
}

/// Point maximizing welfare under the natural matching when `k` moves there
/// and the others stay; lowest index on ties.
pub fn optimal_target(inst: &EcosystemInstance, k: usize, locations: &[usize]) -> Result<usize, CoreError> {
    let values = (0..inst.num_content())
        .map(|j| welfare_with(inst, k, j, locations))
        .collect::<Result<Vec<_>, _>>()?;
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    values.iter().position(|&v| v >= max - TOL).ok_or(CoreError::EmptyCatalog)
}

/// Welfare of the natural matching at `locations` with `k` moved to `j`.
pub fn welfare_with(inst: &EcosystemInstance, k: usize, j: usize, locations: &[usize]) -> Result<f64, CoreError> {
    let mut at = locations.to_vec();
    at[k] = j;
    let mu = natural_matching(&at, inst)?;
    matching_value(&mu, &at, inst)
}

/// Hoeffding-style visit count ⌈Q²/(2ε²)·ln(2/δ)⌉, at least 1.
pub fn default_sample_complexity(epsilon: f64, delta: f64, q_count: usize) -> usize {
    let q = q_count as f64;
    let x = q * q / (2.0 * epsilon * epsilon) * (2.0 / delta).ln();
    if !x.is_finite() {
        return usize::MAX;
    }
    // Absorbs rounding in the plug-in so exact integers are not bumped up.
    (x * (1.0 - 1e-12)).ceil().max(1.0) as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SampleComplexity {
    Hoeffding,
    Fixed(usize),
}

impl SampleComplexity {
    pub fn evaluate(self, epsilon: f64, delta: f64, q_count: usize) -> usize {
        match self {
            SampleComplexity::Hoeffding => default_sample_complexity(epsilon, delta, q_count),
            SampleComplexity::Fixed(n) => n.max(1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub trust_threshold: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub sample_complexity: SampleComplexity,
    pub max_rounds: usize,
    pub audience_update: AudienceUpdate,
}

impl PolicyConfig {
    pub fn new(trust_threshold: f64, epsilon: f64, delta: f64) -> Result<Self, CoreError> {
        let cfg = PolicyConfig {
            trust_threshold,
            epsilon,
            delta,
            sample_complexity: SampleComplexity::Hoeffding,
            max_rounds: DEFAULT_MAX_ROUNDS,
            audience_update: AudienceUpdate::RunningMean,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Full trust threshold, one goal prompt, collapsing beliefs.
    pub fn deterministic() -> Self {
        PolicyConfig {
            trust_threshold: 1.0,
            epsilon: 1.0,
            delta: 0.5,
            sample_complexity: SampleComplexity::Fixed(1),
            max_rounds: DEFAULT_MAX_ROUNDS,
            audience_update: AudienceUpdate::Collapse,
        }
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        if !(self.trust_threshold > 0.0 && self.trust_threshold <= 1.0) {
            return Err(CoreError::InvalidConfig(format!("trust threshold {}", self.trust_threshold)));
        }
        if !(self.epsilon > 0.0) {
            return Err(CoreError::InvalidConfig(format!("epsilon {}", self.epsilon)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(CoreError::InvalidConfig(format!("delta {}", self.delta)));
        }
        Ok(())
    }

    /// Number of goal prompts before termination, T(ε, δ/2).
    pub fn goal_prompts(&self, q_count: usize) -> usize {
        self.sample_complexity.evaluate(self.epsilon, self.delta / 2.0, q_count)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    #[serde(rename = "phase1")]
    BuildTrust,
    #[serde(rename = "phase2")]
    PromptToGoal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyStep {
    pub stage: usize,
    pub phase: Phase,
    pub matching: Matching,
    pub prompt: Prompt,
    /// Trust after settling the previous prompt, when this prompt is issued.
    pub trust: f64,
    pub location: usize,
    pub next_location: usize,
    pub outcome: StageOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyRun {
    pub steps: Vec<PolicyStep>,
    pub terminated: bool,
    pub rounds: usize,
    pub goal_prompts: usize,
    pub final_state: EcosystemState,
}

impl PolicyRun {
    pub fn final_location(&self, k: usize) -> usize {
        self.final_state.locations[k]
    }

    pub fn min_trust(&self) -> f64 {
        self.steps.iter().map(|s| s.trust).fold(f64::INFINITY, f64::min)
    }
}

/// Matching used while provider `k` sits at the goal: the natural matching
/// for the prompted locations. Elsewhere the policy matches with `mu`.
struct Matchings {
    base: Matching,
    goal: Matching,
    goal_point: usize,
}

impl Matchings {
    fn at(&self, location: usize) -> &Matching {
        if location == self.goal_point {
            &self.goal
        } else {
            &self.base
        }
    }
}

fn expected_audience(mu: &Matching, inst: &EcosystemInstance, k: usize, j: usize) -> f64 {
    let mut total = 0.0;
    for (q, row) in mu.probs.iter().enumerate() {
        total += row[k] * inst.affinity[q][j];
    }
    total
}

/// Two-phase policy: build trust by promising the expected audience at the
/// current point until trust reaches the threshold, then prompt the goal with
/// the minimum incentive; stop after the configured number of goal prompts.
pub fn run_two_phase(
    inst: &EcosystemInstance,
    k: usize,
    state: &EcosystemState,
    mu: &Matching,
    j_star: usize,
    cfg: &PolicyConfig,
    realize_mode: RealizeMode,
) -> Result<PolicyRun, CoreError> {
    cfg.validate()?;
    if k >= inst.num_providers() {
        return Err(CoreError::IndexOutOfRange { what: "provider", index: k, len: inst.num_providers() });
    }
    if j_star >= inst.num_content() {
        return Err(CoreError::IndexOutOfRange { what: "content", index: j_star, len: inst.num_content() });
    }
    mu.validate()?;
    let mut goal_locations = state.locations.clone();
    goal_locations[k] = j_star;
    let matchings = Matchings { base: mu.clone(), goal: natural_matching(&goal_locations, inst)?, goal_point: j_star };
    let opts = StepOptions {
        realize: realize_mode,
        prompt_mode: PromptMode::Incremental,
        audience_update: cfg.audience_update,
        enforce_rationalizable: false,
    };
    let goal_prompts = cfg.goal_prompts(inst.num_users());
    let bound = inst.column_audience(j_star);
    let mut current = state.clone();
    let mut steps = Vec::new();
    let mut entries = 0;
    while steps.len() < cfg.max_rounds {
        let location = current.locations[k];
        let matching = matchings.at(location);
        let (half, outcome) = observe(&current, matching, inst, &opts)?;
        let trust = half.state.trust[k];
        let (phase, prompt) = if trust >= cfg.trust_threshold - TOL {
            let s = &half.state;
            let commitment =
                match min_incentive_phi(j_star, cfg.trust_threshold, &s.skill_belief[k], &s.audience_belief[k])? {
                    Incentive::Commitment(c) => c,
                    // A belief-neutral prompt that still names the goal.
                    Incentive::NoIncentiveNeeded => s.audience_belief[k][j_star],
                };
            if commitment > bound + TOL {
                return Err(CoreError::TargetNotIncentivizable { target: j_star, needed: commitment, bound });
            }
            (Phase::PromptToGoal, Prompt { target: j_star, commitment: commitment.min(bound) })
        } else {
            (Phase::BuildTrust, Prompt { target: location, commitment: expected_audience(matching, inst, k, location) })
        };
        let mut prompts = vec![None; inst.num_providers()];
        prompts[k] = Some(prompt);
        let next = respond(&half, &prompts, inst, &opts)?;
        steps.push(PolicyStep {
            stage: current.stage,
            phase,
            matching: matching.clone(),
            prompt,
            trust,
            location,
            next_location: next.locations[k],
            outcome,
        });
        current = next;
        if phase == Phase::PromptToGoal {
            entries += 1;
            if entries >= goal_prompts {
                let rounds = steps.len();
                return Ok(PolicyRun { steps, terminated: true, rounds, goal_prompts: entries, final_state: current });
            }
        }
    }
    Err(CoreError::MaxRoundsExceeded(cfg.max_rounds))
}

/// Build trust to 1 with expected-audience prompts, then a single goal prompt
/// at full trust.
pub fn run_deterministic_policy(
    inst: &EcosystemInstance,
    k: usize,
    state: &EcosystemState,
    mu: &Matching,
    j_star: usize,
) -> Result<PolicyRun, CoreError> {
    run_two_phase(inst, k, state, mu, j_star, &PolicyConfig::deterministic(), RealizeMode::Expected)
}

/// Two-phase policy with sampled matchings; a pure function of `seed`.
pub fn run_general_policy(
    inst: &EcosystemInstance,
    k: usize,
    state: &EcosystemState,
    mu: &Matching,
    j_star: usize,
    cfg: &PolicyConfig,
    seed: u64,
) -> Result<PolicyRun, CoreError> {
    run_two_phase(inst, k, state, mu, j_star, cfg, RealizeMode::Sampled { seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ecosystem::tests::instance;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn phi_examples() {
        // One competitor with believed product 5 and s̃_j = 0.5.
        let s = [0.5, 1.0];
        assert_eq!(min_incentive_phi(0, 1.0, &s, &[0.0, 5.0]).unwrap(), Incentive::Commitment(10.0));
        assert_eq!(min_incentive_phi(0, 0.5, &s, &[2.0, 5.0]).unwrap(), Incentive::Commitment(18.0));
        assert_eq!(min_incentive_phi(1, 0.5, &s, &[2.0, 5.0]).unwrap(), Incentive::NoIncentiveNeeded);
        assert!(matches!(min_incentive_phi(0, 0.0, &s, &[2.0, 5.0]), Err(CoreError::Uninfluenceable(_))));
        assert!(matches!(min_incentive_phi(0, 0.5, &[0.0, 1.0], &[2.0, 5.0]), Err(CoreError::Unincentivizable(0))));
    }

    #[test]
    fn phi_matches_literal_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let s: Vec<f64> = (0..5).map(|_| rng.random_range(0.01..1.0)).collect();
            let a: Vec<f64> = (0..5).map(|_| rng.random_range(0.0..10.0)).collect();
            let lam: f64 = rng.random_range(0.01..1.0);
            let j = rng.random_range(0..5);
            let own = s[j] * a[j];
            let literal = (0..5)
                .filter(|&l| s[l] * a[l] > own)
                .map(|l| (1.0 / lam) * (s[l] * a[l] / s[j] - (1.0 - lam) * a[j]))
                .fold(f64::NEG_INFINITY, f64::max);
            match min_incentive_phi(j, lam, &s, &a).unwrap() {
                Incentive::Commitment(c) => assert!((c - literal).abs() <= 1e-9 * literal.abs().max(1.0)),
                Incentive::NoIncentiveNeeded => assert_eq!(literal, f64::NEG_INFINITY),
            }
        }
    }

    #[test]
    fn phi_commitment_makes_target_best_response() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let s: Vec<f64> = (0..4).map(|_| rng.random_range(0.05..1.0)).collect();
            let a: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..5.0)).collect();
            let lam: f64 = rng.random_range(0.05..=1.0);
            let j = rng.random_range(0..4);
            if let Incentive::Commitment(c) = min_incentive_phi(j, lam, &s, &a).unwrap() {
                let mut updated = a.clone();
                updated[j] = (1.0 - lam) * a[j] + lam * c;
                let max = (0..4).map(|l| s[l] * updated[l]).fold(f64::NEG_INFINITY, f64::max);
                assert!(s[j] * updated[j] >= max - 1e-9);
            }
        }
    }

    #[test]
    fn sample_complexity_plug_ins() {
        assert_eq!(default_sample_complexity(1e12, 0.1, 10), 1);
        let q = 7usize;
        let eps = q as f64 / 2f64.sqrt();
        assert_eq!(default_sample_complexity(eps, 2.0 / std::f64::consts::E, q), 1);
        assert!(default_sample_complexity(0.1, 0.1, 5) >= default_sample_complexity(0.2, 0.1, 5));
        assert!(default_sample_complexity(0.1, 0.05, 5) >= default_sample_complexity(0.1, 0.1, 5));
    }

    #[test]
    fn overestimates_two_point() {
        // Believed (0.4, 1.6), utilities (0.9, 0.6).
        let o = undominated_overestimates(&[0.8, 0.8], &[0.5, 2.0], &[0.9, 0.6]);
        assert_eq!(o, vec![1]);
        assert!(undominated_overestimates(&[0.5, 0.5], &[0.1, 0.1], &[0.9, 0.6]).is_empty());
    }

    #[test]
    fn overestimates_match_set_builder() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..300 {
            let s: Vec<f64> = (0..8).map(|_| rng.random()).collect();
            let a: Vec<f64> = (0..8).map(|_| rng.random_range(0.0..2.0)).collect();
            let e: Vec<f64> = (0..8).map(|_| rng.random()).collect();
            let mut brute = Vec::new();
            for j in 0..8 {
                let over = s[j] * a[j] > e[j];
                let dominated = (0..8).any(|jp| s[jp] * a[jp] > e[j] && e[jp] > e[j]);
                if over && !dominated {
                    brute.push(j);
                }
            }
            assert_eq!(undominated_overestimates(&s, &a, &e), brute);
        }
    }

    #[test]
    fn optimal_target_single_provider() {
        let inst = instance(vec![vec![0.2, 0.9, 0.5], vec![0.7, 0.1, 0.5]], vec![vec![1.0, 0.6, 0.95]]);
        let scan: Vec<f64> = (0..3).map(|j| inst.column_audience(j) * inst.true_skill[0][j]).collect();
        let arg = (0..3).fold(0, |b, j| if scan[j] > scan[b] { j } else { b });
        assert_eq!(optimal_target(&inst, 0, &[0]).unwrap(), arg);
        let one = instance(vec![vec![0.3]], vec![vec![0.5], vec![0.2]]);
        assert_eq!(optimal_target(&one, 1, &[0, 0]).unwrap(), 0);
    }

    #[test]
    fn exploration_counterexample_leaves_overestimates() {
        // Believed (5, 4), utilities (3, 1): point 1 is dominated by point 0
        // yet the provider tries it because 4 exceeds the utility 3 it saw.
        let believed = [5.0, 4.0];
        let utilities = [3.0, 1.0];
        let o = undominated_overestimates(&[1.0, 1.0], &believed, &utilities);
        assert_eq!(o, vec![0]);
        let (visited, rest) = exploration_set(&believed, &utilities);
        assert_eq!(visited, vec![0, 1]);
        assert_eq!(rest, 0);

        let mut inst = instance(vec![vec![5.0, 4.0]], vec![vec![0.6, 0.25]]);
        inst.initial_skill_belief = vec![vec![1.0, 1.0]];
        inst.initial_audience_belief = vec![vec![5.0, 4.0]];
        let st = EcosystemState::initial(&inst).unwrap();
        let e = fixed_matching_utilities(&inst, 0, &st.locations).unwrap();
        assert_eq!(e, vec![3.0, 1.0]);
        let run = simulate_no_prompt(&inst, 0, &st, 10).unwrap();
        assert_eq!(run.visited(), vec![0, 1]);
        assert_eq!(run.equilibrium, 0);
    }

    fn random_instance(rng: &mut ChaCha8Rng, k: usize, j: usize, q: usize) -> EcosystemInstance {
        let affinity: Vec<Vec<f64>> = (0..q).map(|_| (0..j).map(|_| rng.random()).collect()).collect();
        let skill: Vec<Vec<f64>> = (0..k).map(|_| (0..j).map(|_| rng.random()).collect()).collect();
        let mut inst = instance(affinity, skill);
        inst.initial_skill_belief = (0..k).map(|_| (0..j).map(|_| rng.random()).collect()).collect();
        inst.initial_audience_belief =
            (0..k).map(|_| (0..j).map(|c| rng.random_range(0.0..inst.column_audience(c))).collect()).collect();
        inst
    }

    #[test]
    fn no_prompt_run_matches_exploration_set() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..300 {
            let inst = random_instance(&mut rng, 2, 6, 4);
            let st = EcosystemState::initial(&inst).unwrap();
            let k = rng.random_range(0..2);
            let e = fixed_matching_utilities(&inst, k, &st.locations).unwrap();
            let believed: Vec<f64> = (0..6).map(|j| st.believed(k, j)).collect();
            let (visited, rest) = exploration_set(&believed, &e);
            let run = simulate_no_prompt(&inst, k, &st, 100).unwrap();
            let mut got = run.visited();
            let mut want = visited.clone();
            got.sort_unstable();
            want.sort_unstable();
            assert_eq!(got, want, "{believed:?} {e:?} {:?}", run.locations);
            assert_eq!(run.equilibrium, rest);
            assert!(visited.iter().all(|&j| e[rest] >= e[j] - TOL));
        }
    }

    #[test]
    fn truthful_beliefs_rest_immediately() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut inst = random_instance(&mut rng, 1, 4, 3);
        inst.initial_skill_belief = inst.true_skill.clone();
        inst.initial_audience_belief = vec![(0..4).map(|j| inst.column_audience(j)).collect()];
        let st = EcosystemState::initial(&inst).unwrap();
        let run = simulate_no_prompt(&inst, 0, &st, 10).unwrap();
        assert_eq!(run.relocations(), 0);
        assert_eq!(run.equilibrium, st.locations[0]);
    }

    /// One provider, truthful skills, and an underestimated best point.
    fn underestimated_goal(eta: f64) -> (EcosystemInstance, EcosystemState, usize) {
        let mut inst = instance(vec![vec![1.0, 0.6, 0.3], vec![0.8, 0.5, 0.4]], vec![vec![0.9, 0.8, 0.5]]);
        inst.learning_rate = vec![eta];
        let cols: Vec<f64> = (0..3).map(|j| inst.column_audience(j)).collect();
        inst.initial_audience_belief = vec![vec![0.1, cols[1], cols[2]]];
        let st = EcosystemState::initial(&inst).unwrap();
        (inst, st, 0)
    }

    #[test]
    fn deterministic_policy_trust_arithmetic() {
        let (inst, st, j_star) = underestimated_goal(0.25);
        assert_eq!(st.locations, vec![1]);
        let mu = natural_matching(&st.locations, &inst).unwrap();
        let run = run_deterministic_policy(&inst, 0, &st, &mu, j_star).unwrap();
        assert_eq!(run.rounds, 5);
        let trusts: Vec<f64> = run.steps.iter().map(|s| s.trust).collect();
        assert_eq!(trusts, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert!(run.steps[..4].iter().all(|s| s.phase == Phase::BuildTrust));
        assert_eq!(run.steps[4].phase, Phase::PromptToGoal);
        assert_eq!(run.final_location(0), j_star);

        let mut inst_full = inst.clone();
        inst_full.initial_trust = vec![1.0];
        let st_full = EcosystemState::initial(&inst_full).unwrap();
        let run = run_deterministic_policy(&inst_full, 0, &st_full, &mu, j_star).unwrap();
        assert_eq!(run.rounds, 1);
        assert_eq!(run.steps[0].phase, Phase::PromptToGoal);
    }

    #[test]
    fn general_policy_reduces_to_deterministic() {
        let (inst, st, j_star) = underestimated_goal(0.3);
        let mu = natural_matching(&st.locations, &inst).unwrap();
        let det = run_deterministic_policy(&inst, 0, &st, &mu, j_star).unwrap();
        let cfg = PolicyConfig { audience_update: AudienceUpdate::Collapse, ..PolicyConfig::deterministic() };
        for seed in 0..5 {
            let gen = run_general_policy(&inst, 0, &st, &mu, j_star, &cfg, seed).unwrap();
            assert_eq!(gen, det);
        }
    }

    #[test]
    fn unreachable_goal_is_reported() {
        let (mut inst, _, j_star) = underestimated_goal(0.5);
        // Make the goal weak in skill belief so the commitment exceeds capacity.
        inst.initial_skill_belief[0][0] = 0.05;
        let st = EcosystemState::initial(&inst).unwrap();
        let mu = natural_matching(&st.locations, &inst).unwrap();
        assert!(matches!(
            run_deterministic_policy(&inst, 0, &st, &mu, j_star),
            Err(CoreError::TargetNotIncentivizable { .. })
        ));
        inst.initial_skill_belief[0][0] = 0.0;
        let st = EcosystemState::initial(&inst).unwrap();
        assert!(matches!(run_deterministic_policy(&inst, 0, &st, &mu, j_star), Err(CoreError::Unincentivizable(0))));
    }

    #[test]
    fn max_rounds_cap() {
        let (inst, st, j_star) = underestimated_goal(0.01);
        let mu = natural_matching(&st.locations, &inst).unwrap();
        let cfg = PolicyConfig { max_rounds: 10, ..PolicyConfig::deterministic() };
        assert!(matches!(
            run_two_phase(&inst, 0, &st, &mu, j_star, &cfg, RealizeMode::Expected),
            Err(CoreError::MaxRoundsExceeded(10))
        ));
    }

    proptest! {
        #[test]
        fn phi_is_monotone_in_trust(
            s in proptest::collection::vec(0.0f64..=1.0, 1..8),
            a_scale in proptest::collection::vec(0.0f64..=1.0, 8),
            j_raw in 0usize..8,
            l1 in 1e-6f64..=1.0,
            l2 in 1e-6f64..=1.0,
        ) {
            let a: Vec<f64> = a_scale[..s.len()].iter().map(|x| 10.0 * x).collect();
            let j = j_raw % s.len();
            let (hi, lo) = if l1 >= l2 { (l1, l2) } else { (l2, l1) };
            match (min_incentive_phi(j, hi, &s, &a), min_incentive_phi(j, lo, &s, &a)) {
                (Ok(x), Ok(y)) => prop_assert!(x.commitment() <= y.commitment()),
                (Err(_), Err(_)) => {}
                other => prop_assert!(false, "inconsistent outcomes {:?}", other),
            }
        }
    }
}
