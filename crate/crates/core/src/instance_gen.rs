//! Synthetic instances, instances from embedding exports, and hand-built
//! counterexamples.

use std::path::Path;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::ecosystem::EcosystemInstance;
use crate::CoreError;

/// Regularizer in the inverse-distance weights of the confusion process.
const INVERSE_DISTANCE_EPS: f64 = 1e-6;

fn default_dim() -> usize {
    2
}
fn default_spread() -> f64 {
    1.0
}
fn default_provider_noise() -> f64 {
    0.1
}
fn default_belief_noise() -> f64 {
    0.5
}
fn default_user_noise() -> f64 {
    0.3
}
fn default_optimism() -> f64 {
    0.5
}
fn default_learning_rate() -> f64 {
    0.25
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub num_content: usize,
    pub num_providers: usize,
    pub num_users: usize,
    #[serde(default = "default_dim")]
    pub dim: usize,
    /// Variance `a` of the content distribution N(0, aI).
    #[serde(default = "default_spread")]
    pub content_spread: f64,
    /// Standard deviation of provider skill points around a content point.
    #[serde(default = "default_provider_noise")]
    pub provider_noise: f64,
    /// Standard deviation of the confused skill point around a content point.
    #[serde(default = "default_belief_noise")]
    pub belief_noise: f64,
    /// Standard deviation of users around a provider skill point.
    #[serde(default = "default_user_noise")]
    pub user_noise: f64,
    /// Affinity offset G in σ = G − d; raised to the largest user–content
    /// distance when smaller or absent.
    #[serde(default)]
    pub affinity_offset: Option<f64>,
    /// Initial audience belief as a fraction β of the column audience.
    #[serde(default = "default_optimism")]
    pub audience_optimism: f64,
    #[serde(default)]
    pub initial_trust: f64,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SyntheticConfig {
    pub fn new(num_content: usize, num_providers: usize, num_users: usize, seed: u64) -> Self {
        SyntheticConfig {
            num_content,
            num_providers,
            num_users,
            dim: default_dim(),
            content_spread: default_spread(),
            provider_noise: default_provider_noise(),
            belief_noise: default_belief_noise(),
            user_noise: default_user_noise(),
            affinity_offset: None,
            audience_optimism: default_optimism(),
            initial_trust: 0.0,
            learning_rate: default_learning_rate(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        let bad = |what: &str| Err(CoreError::InvalidConfig(what.to_string()));
        if self.num_content == 0 || self.num_providers == 0 || self.num_users == 0 || self.dim == 0 {
            return bad("counts and dimension must be at least 1");
        }
        let noise = [self.content_spread, self.provider_noise, self.belief_noise, self.user_noise];
        if noise.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return bad("spread and noise scales must be finite and nonnegative");
        }
        if !(0.0..=1.0).contains(&self.audience_optimism) {
            return bad("audience optimism must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.initial_trust) {
            return bad("initial trust must lie in [0, 1]");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad("learning rate must lie in (0, 1]");
        }
        if self.affinity_offset.is_some_and(|g| !g.is_finite()) {
            return bad("affinity offset must be finite");
        }
        Ok(())
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Affine map of distance onto [0, 1]: 1 at the nearest point, 0 at the
/// farthest; all ones when every distance is equal.
fn skill_from_point(point: &[f64], content: &[Vec<f64>]) -> Vec<f64> {
    let d: Vec<f64> = content.iter().map(|c| distance(point, c)).collect();
    let max = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = d.iter().copied().fold(f64::INFINITY, f64::min);
    if max - min <= 0.0 {
        return vec![1.0; d.len()];
    }
    d.iter().map(|&x| ((max - x) / (max - min)).clamp(0.0, 1.0)).collect()
}

fn gaussian_around(rng: &mut ChaCha8Rng, center: &[f64], sd: f64) -> Vec<f64> {
    if sd == 0.0 {
        return center.to_vec();
    }
    let noise = Normal::new(0.0, sd).expect("finite standard deviation");
    center.iter().map(|&c| c + noise.sample(rng)).collect()
}

/// Content point drawn with probability proportional to inverse distance from
/// `point`, plus Gaussian noise.
fn confused_point(rng: &mut ChaCha8Rng, point: &[f64], content: &[Vec<f64>], sd: f64) -> Vec<f64> {
    let weights: Vec<f64> = content.iter().map(|c| 1.0 / (INVERSE_DISTANCE_EPS + distance(point, c))).collect();
    let pick = WeightedIndex::new(&weights).expect("positive weights").sample(rng);
    gaussian_around(rng, &content[pick], sd)
}

/// Skill beliefs from the confusion process around each provider point.
fn confused_beliefs(rng: &mut ChaCha8Rng, providers: &[Vec<f64>], content: &[Vec<f64>], sd: f64) -> Vec<Vec<f64>> {
    providers.iter().map(|p| skill_from_point(&confused_point(rng, p, content, sd), content)).collect()
}

fn optimistic_audience(affinity: &[Vec<f64>], providers: usize, beta: f64) -> Vec<Vec<f64>> {
    let j = affinity.first().map_or(0, Vec::len);
    let cols: Vec<f64> = (0..j).map(|c| affinity.iter().map(|r| r[c]).sum()).collect();
    vec![cols.iter().map(|&s| beta * s).collect(); providers]
}

pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<EcosystemInstance, CoreError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let origin = vec![0.0; cfg.dim];
    let mut content: Vec<Vec<f64>> =
        (0..cfg.num_content).map(|_| gaussian_around(&mut rng, &origin, cfg.content_spread.sqrt())).collect();
    // Shift into the nonnegative orthant.
    for axis in 0..cfg.dim {
        let min = content.iter().map(|c| c[axis]).fold(f64::INFINITY, f64::min);
        for c in &mut content {
            c[axis] -= min;
        }
    }
    let providers: Vec<Vec<f64>> = (0..cfg.num_providers)
        .map(|_| {
            let center = rng.random_range(0..cfg.num_content);
            gaussian_around(&mut rng, &content[center], cfg.provider_noise)
        })
        .collect();
    let true_skill: Vec<Vec<f64>> = providers.iter().map(|p| skill_from_point(p, &content)).collect();
    let skill_belief = confused_beliefs(&mut rng, &providers, &content, cfg.belief_noise);
    let users: Vec<Vec<f64>> = (0..cfg.num_users)
        .map(|_| {
            let center = rng.random_range(0..cfg.num_providers);
            gaussian_around(&mut rng, &providers[center], cfg.user_noise)
        })
        .collect();
    let distances: Vec<Vec<f64>> = users.iter().map(|u| content.iter().map(|c| distance(u, c)).collect()).collect();
    let max_d = distances.iter().flatten().copied().fold(0.0, f64::max);
    let offset = match cfg.affinity_offset {
        Some(g) if g >= max_d => g,
        Some(g) => {
            log::warn!("affinity offset {g} is below the largest distance {max_d}; using {max_d}");
            max_d
        }
        None => max_d,
    };
    let affinity: Vec<Vec<f64>> =
        distances.iter().map(|row| row.iter().map(|&d| (offset - d).max(0.0)).collect()).collect();
    let initial_audience_belief = optimistic_audience(&affinity, cfg.num_providers, cfg.audience_optimism);
    let inst = EcosystemInstance {
        content_points: content,
        users,
        affinity,
        true_skill,
        initial_skill_belief: skill_belief,
        initial_audience_belief,
        initial_trust: vec![cfg.initial_trust; cfg.num_providers],
        learning_rate: vec![cfg.learning_rate; cfg.num_providers],
        sigma_max: offset,
        seed: cfg.seed,
        meta: serde_json::json!({ "generator": "synthetic", "config": cfg, "affinity_offset": offset }),
    };
    inst.validate()?;
    Ok(inst)
}

/// Item and user embeddings exported by the preprocessing pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingExport {
    pub items: Vec<Vec<f64>>,
    pub users: Vec<Vec<f64>>,
    pub item_cluster_sizes: Vec<u64>,
    #[serde(default)]
    pub meta: serde_json::Value,
}

impl EmbeddingExport {
    pub fn validate(&self) -> Result<(), CoreError> {
        let schema = |m: String| Err(CoreError::InvalidInstance(format!("embedding export: {m}")));
        if self.items.is_empty() || self.users.is_empty() {
            return schema("needs at least one item and one user".into());
        }
        let dim = self.items[0].len();
        if dim == 0 || self.items.iter().chain(&self.users).any(|v| v.len() != dim) {
            return schema("embeddings must share one nonzero dimension".into());
        }
        if self.items.iter().chain(&self.users).flatten().any(|x| !x.is_finite()) {
            return schema("non-finite embedding entry".into());
        }
        if self.item_cluster_sizes.len() != self.items.len() {
            return schema(format!(
                "{} cluster sizes for {} items",
                self.item_cluster_sizes.len(),
                self.items.len()
            ));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, CoreError> {
        let export: Self = serde_json::from_str(text)?;
        export.validate()?;
        Ok(export)
    }

    pub fn load(path: &Path) -> Result<Self, CoreError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), CoreError> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Provider and belief parameters used when building an instance from an
/// embedding export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingOptions {
    pub num_providers: usize,
    #[serde(default = "default_provider_noise")]
    pub provider_noise: f64,
    #[serde(default = "default_belief_noise")]
    pub belief_noise: f64,
    #[serde(default = "default_optimism")]
    pub audience_optimism: f64,
    #[serde(default)]
    pub initial_trust: f64,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default)]
    pub seed: u64,
}

impl EmbeddingOptions {
    pub fn new(num_providers: usize, seed: u64) -> Self {
        EmbeddingOptions {
            num_providers,
            provider_noise: default_provider_noise(),
            belief_noise: default_belief_noise(),
            audience_optimism: default_optimism(),
            initial_trust: 0.0,
            learning_rate: default_learning_rate(),
            seed,
        }
    }
}

/// Tolerance on raw inner products outside [0, 1] before a warning.
const INNER_PRODUCT_SLACK: f64 = 1e-6;

/// Builds an instance whose content points are the exported items and whose
/// affinities are user–item inner products clipped to [0, 1]. Provider skill
/// points are drawn around items in proportion to cluster size, and beliefs
/// come from the same confusion process as synthetic instances.
pub fn instance_from_export(export: &EmbeddingExport, opts: &EmbeddingOptions) -> Result<EcosystemInstance, CoreError> {
    export.validate()?;
    if opts.num_providers == 0 {
        return Err(CoreError::InvalidConfig("at least one provider".into()));
    }
    let mut clipped = 0usize;
    let affinity: Vec<Vec<f64>> = export
        .users
        .iter()
        .map(|u| {
            export
                .items
                .iter()
                .map(|i| {
                    let dot: f64 = u.iter().zip(i).map(|(a, b)| a * b).sum();
                    if !(-INNER_PRODUCT_SLACK..=1.0 + INNER_PRODUCT_SLACK).contains(&dot) {
                        clipped += 1;
                    }
                    dot.clamp(0.0, 1.0)
                })
                .collect()
        })
        .collect();
    if clipped > 0 {
        log::warn!("{clipped} user-item inner products fell outside [0, 1] and were clipped");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let weights: Vec<f64> = export.item_cluster_sizes.iter().map(|&s| s.max(1) as f64).collect();
    let by_size = WeightedIndex::new(&weights).expect("positive weights");
    let providers: Vec<Vec<f64>> = (0..opts.num_providers)
        .map(|_| {
            let center = by_size.sample(&mut rng);
            gaussian_around(&mut rng, &export.items[center], opts.provider_noise)
        })
        .collect();
    let true_skill = providers.iter().map(|p| skill_from_point(p, &export.items)).collect();
    let skill_belief = confused_beliefs(&mut rng, &providers, &export.items, opts.belief_noise);
    let inst = EcosystemInstance {
        content_points: export.items.clone(),
        users: export.users.clone(),
        initial_audience_belief: optimistic_audience(&affinity, opts.num_providers, opts.audience_optimism),
        affinity,
        true_skill,
        initial_skill_belief: skill_belief,
        initial_trust: vec![opts.initial_trust; opts.num_providers],
        learning_rate: vec![opts.learning_rate; opts.num_providers],
        sigma_max: 1.0,
        seed: opts.seed,
        meta: serde_json::json!({
            "generator": "embedding",
            "export_meta": export.meta,
            "num_items": export.items.len(),
            "num_users": export.users.len(),
            "clipped_affinities": clipped,
        }),
    };
    inst.validate()?;
    Ok(inst)
}

pub fn load_embedding_export(path: &Path, opts: &EmbeddingOptions) -> Result<EcosystemInstance, CoreError> {
    instance_from_export(&EmbeddingExport::load(path)?, opts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Counterexample {
    /// One provider whose unprompted dynamics settle on the worse of two
    /// points.
    TwoPointDominance,
    /// Two providers that are each better at the other's point.
    Swap,
}

impl FromStr for Counterexample {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "two_point_dominance" => Ok(Counterexample::TwoPointDominance),
            "swap" => Ok(Counterexample::Swap),
            other => Err(CoreError::InvalidConfig(format!("unknown counterexample {other:?}"))),
        }
    }
}

/// Points 0 and 1 for one provider and two users. Believed rewards are
/// (0.4, 1.6) and utilities (0.9, 0.6), so 1.6 > 0.9 > 0.6 > 0.4: the
/// provider starts at point 1 and stays there although point 0 is worth 0.3
/// more.
pub const TWO_POINT_GAP: f64 = 0.3;

fn two_point_dominance() -> EcosystemInstance {
    EcosystemInstance {
        content_points: vec![vec![0.5], vec![0.0]],
        users: vec![vec![0.0], vec![0.0]],
        affinity: vec![vec![0.5, 1.0], vec![0.5, 1.0]],
        true_skill: vec![vec![0.9, 0.3]],
        initial_skill_belief: vec![vec![0.8, 0.8]],
        initial_audience_belief: vec![vec![0.5, 2.0]],
        initial_trust: vec![0.0],
        learning_rate: vec![0.25],
        sigma_max: 1.0,
        seed: 0,
        meta: serde_json::json!({ "counterexample": "two_point_dominance" }),
    }
}

/// Provider 0 starts at point 0 and provider 1 at point 1; each is more
/// skilled at the other's point, and user `q` only values point `q`.
fn swap() -> EcosystemInstance {
    EcosystemInstance {
        content_points: vec![vec![0.0], vec![1.0]],
        users: vec![vec![0.0], vec![1.0]],
        affinity: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        true_skill: vec![vec![0.3, 0.9], vec![0.9, 0.3]],
        initial_skill_belief: vec![vec![0.3, 0.5], vec![0.5, 0.3]],
        initial_audience_belief: vec![vec![1.0, 0.2], vec![0.2, 1.0]],
        initial_trust: vec![0.0, 0.0],
        learning_rate: vec![0.25, 0.25],
        sigma_max: 1.0,
        seed: 0,
        meta: serde_json::json!({ "counterexample": "swap" }),
    }
}

fn certify(name: Counterexample, inst: &EcosystemInstance) -> Result<(), CoreError> {
    let fail = |what: &str| Err(CoreError::InvalidInstance(format!("{name:?} certificate: {what}")));
    match name {
        Counterexample::TwoPointDominance => {
            let believed: Vec<f64> =
                (0..2).map(|j| inst.initial_skill_belief[0][j] * inst.initial_audience_belief[0][j]).collect();
            let utility: Vec<f64> = (0..2).map(|j| inst.true_skill[0][j] * inst.column_audience(j)).collect();
            if !(believed[1] > utility[0] && utility[0] > utility[1] && utility[1] > believed[0]) {
                return fail("believed(1) > E(0) > E(1) > believed(0)");
            }
        }
        Counterexample::Swap => {
            let s = &inst.true_skill;
            let (a, b, x, y) = (0, 1, 0, 1);
            if !(s[a][y] > s[a][x] && s[a][y] > s[b][y] && s[b][x] > s[b][y] && s[b][x] > s[a][x]) {
                return fail("skill pattern");
            }
        }
    }
    Ok(())
}

pub fn make_counterexample(name: Counterexample) -> Result<EcosystemInstance, CoreError> {
    let inst = match name {
        Counterexample::TwoPointDominance => two_point_dominance(),
        Counterexample::Swap => swap(),
    };
    inst.validate()?;
    certify(name, &inst)?;
    Ok(inst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_sizes() {
        let inst = generate_synthetic(&SyntheticConfig::new(1, 1, 1, 9)).unwrap();
        assert_eq!(inst.affinity.len(), 1);
        assert_eq!(inst.affinity[0].len(), 1);
        assert_eq!(inst.true_skill, vec![vec![1.0]]);
        assert!(inst.affinity[0][0] >= 0.0);
        let d = distance(&inst.users[0], &inst.content_points[0]);
        assert!((inst.affinity[0][0] - (inst.sigma_max - d)).abs() < 1e-12);
    }

    #[test]
    fn same_seed_same_json() {
        let cfg = SyntheticConfig::new(6, 3, 10, 42);
        let a = generate_synthetic(&cfg).unwrap().to_json().unwrap();
        let b = generate_synthetic(&cfg).unwrap().to_json().unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(&SyntheticConfig { seed: 43, ..cfg }).unwrap().to_json().unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn ranges_on_medium_config() {
        let inst = generate_synthetic(&SyntheticConfig::new(20, 5, 50, 1)).unwrap();
        assert!(inst.true_skill.iter().chain(&inst.initial_skill_belief).flatten().all(|x| (0.0..=1.0).contains(x)));
        assert!(inst.affinity.iter().flatten().all(|&s| (0.0..=inst.sigma_max).contains(&s)));
        assert!(inst.content_points.iter().flatten().all(|&x| x >= 0.0));
    }

    #[test]
    fn small_offset_is_raised() {
        let cfg = SyntheticConfig { affinity_offset: Some(0.01), ..SyntheticConfig::new(5, 2, 8, 3) };
        let inst = generate_synthetic(&cfg).unwrap();
        assert!(inst.sigma_max > 0.01);
        assert!(inst.affinity.iter().flatten().all(|&s| s >= 0.0));
        let big = SyntheticConfig { affinity_offset: Some(100.0), ..cfg };
        assert_eq!(generate_synthetic(&big).unwrap().sigma_max, 100.0);
    }

    #[test]
    fn config_validation() {
        assert!(generate_synthetic(&SyntheticConfig::new(0, 1, 1, 0)).is_err());
        let cfg = SyntheticConfig { learning_rate: 0.0, ..SyntheticConfig::new(2, 1, 1, 0) };
        assert!(generate_synthetic(&cfg).is_err());
    }

    #[test]
    fn skill_normalization() {
        let content = vec![vec![0.0], vec![1.0], vec![3.0]];
        assert_eq!(skill_from_point(&[0.0], &content), vec![1.0, 2.0 / 3.0, 0.0]);
        assert_eq!(skill_from_point(&[0.0], &[vec![1.0], vec![-1.0]]), vec![1.0, 1.0]);
    }

    #[test]
    fn orthonormal_export_gives_identity_affinity() {
        let export = EmbeddingExport {
            items: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            users: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            item_cluster_sizes: vec![3, 5],
            meta: serde_json::json!({ "rank": 2 }),
        };
        let inst = instance_from_export(&export, &EmbeddingOptions::new(2, 0)).unwrap();
        assert_eq!(inst.affinity, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(inst.num_content(), 2);
        assert_eq!(inst.num_users(), 2);
    }

    #[test]
    fn export_round_trip_and_schema() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("export.json");
        let export = EmbeddingExport {
            items: vec![vec![0.5, 0.1], vec![0.2, 0.7], vec![0.3, 0.3]],
            users: vec![vec![0.9, 0.2]],
            item_cluster_sizes: vec![1, 2, 3],
            meta: serde_json::json!({ "iterations": 10 }),
        };
        export.save(&path).unwrap();
        assert_eq!(EmbeddingExport::load(&path).unwrap(), export);
        let opts = EmbeddingOptions::new(2, 5);
        let a = load_embedding_export(&path, &opts).unwrap();
        assert_eq!(a, instance_from_export(&export, &opts).unwrap());
        assert!(EmbeddingExport::from_json(r#"{"items": [[1.0]], "users": [[1.0, 2.0]], "item_cluster_sizes": [1]}"#).is_err());
        assert!(EmbeddingExport::from_json(r#"{"items": [[1.0]], "users": [[1.0]], "item_cluster_sizes": []}"#).is_err());
        assert!(EmbeddingExport::from_json(r#"{"items": [[1.0]]}"#).is_err());
    }

    #[test]
    fn out_of_range_inner_products_are_clipped() {
        let export = EmbeddingExport {
            items: vec![vec![2.0], vec![-1.0]],
            users: vec![vec![1.0]],
            item_cluster_sizes: vec![1, 1],
            meta: serde_json::Value::Null,
        };
        let inst = instance_from_export(&export, &EmbeddingOptions::new(1, 0)).unwrap();
        assert_eq!(inst.affinity, vec![vec![1.0, 0.0]]);
        assert_eq!(inst.meta["clipped_affinities"], 2);
    }

    #[test]
    fn counterexamples_are_certified() {
        for name in ["two_point_dominance", "swap"] {
            let c: Counterexample = name.parse().unwrap();
            make_counterexample(c).unwrap().validate().unwrap();
        }
        assert!("nope".parse::<Counterexample>().is_err());
        let mut broken = swap();
        broken.true_skill[0][1] = 0.1;
        assert!(certify(Counterexample::Swap, &broken).is_err());
    }
}
