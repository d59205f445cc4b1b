//! Static instance data and one-stage economics.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::CoreError;

/// Absolute tolerance for every value comparison.
pub const TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcosystemInstance {
    pub content_points: Vec<Vec<f64>>,
    pub users: Vec<Vec<f64>>,
    /// Q×J affinity σ(q, j).
    pub affinity: Vec<Vec<f64>>,
    /// K×J true skill s*.
    pub true_skill: Vec<Vec<f64>>,
    pub initial_skill_belief: Vec<Vec<f64>>,
    pub initial_audience_belief: Vec<Vec<f64>>,
    pub initial_trust: Vec<f64>,
    pub learning_rate: Vec<f64>,
    pub sigma_max: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub meta: serde_json::Value,
}

fn check_matrix(name: &str, m: &[Vec<f64>], rows: usize, cols: usize) -> Result<(), CoreError> {
    if m.len() != rows || m.iter().any(|r| r.len() != cols) {
        return Err(CoreError::DimensionMismatch(format!("{name} must be {rows}x{cols}")));
    }
    Ok(())
}

fn check_range(name: &str, m: &[Vec<f64>], hi: impl Fn(usize) -> f64) -> Result<(), CoreError> {
    for (r, row) in m.iter().enumerate() {
        for (c, &x) in row.iter().enumerate() {
            if !x.is_finite() || x < 0.0 || x > hi(c) + TOL {
                return Err(CoreError::InvalidInstance(format!("{name}[{r}][{c}] = {x} out of range")));
            }
        }
    }
    Ok(())
}

impl EcosystemInstance {
    pub fn num_providers(&self) -> usize {
        self.true_skill.len()
    }

    pub fn num_content(&self) -> usize {
        self.content_points.len()
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        let (k, j, q) = (self.num_providers(), self.num_content(), self.num_users());
        if j == 0 {
            return Err(CoreError::EmptyCatalog);
        }
        if let Some(dim) = self.content_points.first().map(Vec::len) {
            if self.content_points.iter().chain(&self.users).any(|p| p.len() != dim) {
                return Err(CoreError::DimensionMismatch("embeddings must share one dimension".into()));
            }
        }
        check_matrix("affinity", &self.affinity, q, j)?;
        check_matrix("true_skill", &self.true_skill, k, j)?;
        check_matrix("initial_skill_belief", &self.initial_skill_belief, k, j)?;
        check_matrix("initial_audience_belief", &self.initial_audience_belief, k, j)?;
        if self.initial_trust.len() != k || self.learning_rate.len() != k {
            return Err(CoreError::DimensionMismatch(format!("trust and learning rate must have {k} entries")));
        }
        if !self.sigma_max.is_finite() || self.sigma_max < 0.0 {
            return Err(CoreError::InvalidInstance(format!("sigma_max = {}", self.sigma_max)));
        }
        check_range("affinity", &self.affinity, |_| self.sigma_max)?;
        check_range("true_skill", &self.true_skill, |_| 1.0)?;
        check_range("initial_skill_belief", &self.initial_skill_belief, |_| 1.0)?;
        let bounds: Vec<f64> = (0..j).map(|c| self.column_audience(c)).collect();
        check_range("initial_audience_belief", &self.initial_audience_belief, |c| bounds[c])?;
        for (i, &l) in self.initial_trust.iter().enumerate() {
            if !(0.0..=1.0).contains(&l) {
                return Err(CoreError::InvalidInstance(format!("initial_trust[{i}] = {l}")));
            }
        }
        for (i, &eta) in self.learning_rate.iter().enumerate() {
            if !(eta > 0.0 && eta <= 1.0) {
                return Err(CoreError::InvalidInstance(format!("learning_rate[{i}] = {eta}")));
            }
        }
        Ok(())
    }

    /// Σ_q σ(q, j): the most audience any provider at `j` can receive.
    pub fn column_audience(&self, j: usize) -> f64 {
        self.affinity.iter().map(|row| row[j]).sum()
    }

    /// Σ_q max_j σ(q, j): an upper bound on any audience or commitment.
    pub fn audience_cap(&self) -> f64 {
        self.affinity.iter().map(|row| row.iter().copied().fold(0.0, f64::max)).sum()
    }

    pub fn check_locations(&self, locations: &[usize]) -> Result<(), CoreError> {
        if locations.len() != self.num_providers() {
            return Err(CoreError::DimensionMismatch(format!(
                "{} locations for {} providers",
                locations.len(),
                self.num_providers()
            )));
        }
        let len = self.num_content();
        match locations.iter().find(|&&l| l >= len) {
            Some(&index) => Err(CoreError::IndexOutOfRange { what: "content", index, len }),
            None => Ok(()),
        }
    }

    pub fn to_json(&self) -> Result<String, CoreError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, CoreError> {
        let inst: Self = serde_json::from_str(text)?;
        inst.validate()?;
        Ok(inst)
    }

    pub fn load(path: &Path) -> Result<Self, CoreError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), CoreError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

/// Q×K row-stochastic assignment of users to providers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matching {
    pub probs: Vec<Vec<f64>>,
}

impl Matching {
    pub fn new(probs: Vec<Vec<f64>>) -> Result<Self, CoreError> {
        let m = Matching { probs };
        m.validate()?;
        Ok(m)
    }

    /// Each user `q` goes to provider `assign[q]` with probability 1.
    pub fn deterministic(assign: &[usize], num_providers: usize) -> Self {
        let probs = assign
            .iter()
            .map(|&k| {
                let mut row = vec![0.0; num_providers];
                row[k] = 1.0;
                row
            })
            .collect();
        Matching { probs }
    }

    pub fn num_users(&self) -> usize {
        self.probs.len()
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        for (row, p) in self.probs.iter().enumerate() {
            if p.iter().any(|&x| !x.is_finite() || !(-TOL..=1.0 + TOL).contains(&x)) {
                return Err(CoreError::InvalidValue(format!("matching row {row} has an entry outside [0, 1]")));
            }
            let sum: f64 = p.iter().sum();
            if (sum - 1.0).abs() > TOL {
                return Err(CoreError::UnnormalizedMatching { row, sum });
            }
        }
        Ok(())
    }

    fn check_shape(&self, inst: &EcosystemInstance) -> Result<(), CoreError> {
        let k = inst.num_providers();
        if self.probs.len() != inst.num_users() || self.probs.iter().any(|r| r.len() != k) {
            return Err(CoreError::DimensionMismatch(format!(
                "matching must be {}x{k}",
                inst.num_users()
            )));
        }
        Ok(())
    }
}

/// Recommender suggestion to one provider: a target point and a promised
/// audience.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prompt {
    pub target: usize,
    pub commitment: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageOutcome {
    pub audience: Vec<f64>,
    pub utility: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RealizeMode {
    Expected,
    Sampled { seed: u64 },
}

pub fn utility(sigma: f64, skill: f64) -> Result<f64, CoreError> {
    if !sigma.is_finite() || sigma < 0.0 {
        return Err(CoreError::InvalidValue(format!("affinity {sigma}")));
    }
    if !skill.is_finite() || !(0.0..=1.0).contains(&skill) {
        return Err(CoreError::InvalidValue(format!("skill {skill}")));
    }
    Ok(sigma * skill)
}

pub fn matching_value(mu: &Matching, locations: &[usize], inst: &EcosystemInstance) -> Result<f64, CoreError> {
    inst.check_locations(locations)?;
    mu.check_shape(inst)?;
    let mut total = 0.0;
    for (q, row) in mu.probs.iter().enumerate() {
        for (k, &p) in row.iter().enumerate() {
            let j = locations[k];
            total += p * utility(inst.affinity[q][j], inst.true_skill[k][j])?;
        }
    }
    Ok(total)
}

/// Value-maximizing matching: every user goes to a provider with the highest
/// utility at the current locations, lowest index on ties.
pub fn natural_matching(locations: &[usize], inst: &EcosystemInstance) -> Result<Matching, CoreError> {
    inst.check_locations(locations)?;
    let k = inst.num_providers();
    if k == 0 {
        return Err(CoreError::DimensionMismatch("no providers".into()));
    }
    let assign: Vec<usize> = inst
        .affinity
        .iter()
        .map(|sig| {
            let mut best = 0;
            let mut best_u = f64::NEG_INFINITY;
            for (p, &j) in locations.iter().enumerate() {
                let u = sig[j] * inst.true_skill[p][j];
                if u > best_u + TOL {
                    best = p;
                    best_u = u;
                }
            }
            best
        })
        .collect();
    Ok(Matching::deterministic(&assign, k))
}

pub fn realize(
    mu: &Matching,
    locations: &[usize],
    inst: &EcosystemInstance,
    mode: RealizeMode,
) -> Result<StageOutcome, CoreError> {
    inst.check_locations(locations)?;
    mu.check_shape(inst)?;
    mu.validate()?;
    let k = inst.num_providers();
    let mut audience = vec![0.0; k];
    match mode {
        RealizeMode::Expected => {
            for (q, row) in mu.probs.iter().enumerate() {
                for (p, &prob) in row.iter().enumerate() {
                    audience[p] += prob * inst.affinity[q][locations[p]];
                }
            }
        }
        RealizeMode::Sampled { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for (q, row) in mu.probs.iter().enumerate() {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                // Falls back to the last provider with positive mass when
                // rounding leaves the cumulative sum just under `u`.
                let mut pick = row.iter().rposition(|&x| x > 0.0).unwrap_or(0);
                for (p, &prob) in row.iter().enumerate() {
                    acc += prob;
                    if u < acc && prob > 0.0 {
                        pick = p;
                        break;
                    }
                }
                audience[pick] += inst.affinity[q][locations[pick]];
            }
        }
    }
    let utility = audience.iter().enumerate().map(|(p, &a)| inst.true_skill[p][locations[p]] * a).collect();
    Ok(StageOutcome { audience, utility })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// Small instance with embeddings left empty-dimensional.
    pub(crate) fn instance(affinity: Vec<Vec<f64>>, true_skill: Vec<Vec<f64>>) -> EcosystemInstance {
        let q = affinity.len();
        let j = affinity.first().map_or(0, Vec::len);
        let k = true_skill.len();
        let sigma_max = affinity.iter().flatten().copied().fold(0.0, f64::max);
        EcosystemInstance {
            content_points: vec![vec![]; j],
            users: vec![vec![]; q],
            affinity,
            initial_skill_belief: true_skill.clone(),
            true_skill,
            initial_audience_belief: vec![vec![0.0; j]; k],
            initial_trust: vec![0.0; k],
            learning_rate: vec![0.5; k],
            sigma_max,
            seed: 0,
            meta: serde_json::Value::Null,
        }
    }

    #[test]
    fn utility_is_product() {
        assert_eq!(utility(0.5, 0.8).unwrap(), 0.4);
        assert_eq!(utility(3.0, 0.0).unwrap(), 0.0);
        assert_eq!(utility(1.0, 1.0).unwrap(), 1.0);
        assert!(utility(f64::NAN, 0.5).is_err());
        assert!(utility(-0.1, 0.5).is_err());
    }

    #[test]
    fn value_of_single_term() {
        let inst = instance(vec![vec![0.5]], vec![vec![0.8]]);
        let mu = Matching::deterministic(&[0], 1);
        assert!((matching_value(&mu, &[0], &inst).unwrap() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn value_of_two_by_two() {
        let inst = instance(vec![vec![0.9, 0.1], vec![0.2, 0.7]], vec![vec![1.0, 1.0], vec![1.0, 1.0]]);
        let mu = Matching::deterministic(&[0, 1], 2);
        let brute: f64 = (0..2).map(|q| inst.affinity[q][[0, 1][q]]).sum();
        assert!((matching_value(&mu, &[0, 1], &inst).unwrap() - brute).abs() < 1e-12);
        assert!((brute - 1.6).abs() < 1e-12);
    }

    #[test]
    fn zero_skills_give_zero_value() {
        let inst = instance(vec![vec![0.9, 0.1], vec![0.2, 0.7]], vec![vec![0.0, 0.0]; 2]);
        let mu = Matching::new(vec![vec![0.3, 0.7], vec![0.5, 0.5]]).unwrap();
        assert_eq!(matching_value(&mu, &[1, 0], &inst).unwrap(), 0.0);
    }

    #[test]
    fn natural_matching_prefers_skill_and_low_index() {
        let inst = instance(vec![vec![1.0], vec![0.5]], vec![vec![0.3], vec![0.9]]);
        let mu = natural_matching(&[0, 0], &inst).unwrap();
        assert_eq!(mu.probs, vec![vec![0.0, 1.0], vec![0.0, 1.0]]);
        let tie = instance(vec![vec![1.0]], vec![vec![0.5], vec![0.5]]);
        assert_eq!(natural_matching(&[0, 0], &tie).unwrap().probs, vec![vec![1.0, 0.0]]);
        let single = instance(vec![vec![1.0, 0.2]; 3], vec![vec![0.1, 0.2]]);
        assert!(natural_matching(&[1], &single).unwrap().probs.iter().all(|r| r == &vec![1.0]));
    }

    #[test]
    fn expected_split_audience() {
        let inst = instance(vec![vec![1.0]], vec![vec![1.0], vec![1.0]]);
        let mu = Matching::new(vec![vec![0.5, 0.5]]).unwrap();
        let out = realize(&mu, &[0, 0], &inst, RealizeMode::Expected).unwrap();
        assert_eq!(out.audience, vec![0.5, 0.5]);
        assert_eq!(out.utility, vec![0.5, 0.5]);
    }

    #[test]
    fn rejects_unnormalized_and_bad_locations() {
        let inst = instance(vec![vec![1.0]], vec![vec![1.0], vec![1.0]]);
        let mu = Matching { probs: vec![vec![0.5, 0.4]] };
        assert!(matches!(
            realize(&mu, &[0, 0], &inst, RealizeMode::Expected),
            Err(CoreError::UnnormalizedMatching { row: 0, .. })
        ));
        let ok = Matching::deterministic(&[0], 2);
        assert!(matches!(matching_value(&ok, &[0, 3], &inst), Err(CoreError::IndexOutOfRange { .. })));
        assert!(matches!(matching_value(&ok, &[0], &inst), Err(CoreError::DimensionMismatch(_))));
    }

    #[test]
    fn json_round_trip() {
        let mut inst = instance(vec![vec![0.9, 0.1], vec![0.2, 0.7]], vec![vec![1.0, 0.5]]);
        inst.content_points = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        inst.users = vec![vec![0.5, 0.5], vec![0.2, 0.1]];
        let back = EcosystemInstance::from_json(&inst.to_json().unwrap()).unwrap();
        assert_eq!(back, inst);
    }

    #[test]
    fn validation_catches_ranges() {
        let mut inst = instance(vec![vec![0.9, 0.1]], vec![vec![1.0, 0.5]]);
        inst.initial_audience_belief[0][1] = 0.2;
        assert!(matches!(inst.validate(), Err(CoreError::InvalidInstance(_))));
        inst.initial_audience_belief[0][1] = 0.1;
        inst.validate().unwrap();
        inst.initial_trust[0] = 1.5;
        assert!(inst.validate().is_err());
    }
}
