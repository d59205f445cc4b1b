//! Multi-seed experiments: per seed, build an instance, solve the three
//! policy classes, replay-check them and compute metrics; then write the
//! report files.

use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use promptsim_core::instance_gen::{generate_synthetic, load_embedding_export, EmbeddingOptions, SyntheticConfig};
use promptsim_core::EcosystemInstance;
use promptsim_joint::{solve_joint, validate_trajectory, JointMipSpec, JointSolution, PolicyClass};
use promptsim_mip::{Backend, ExternalSolver, DEFAULT_MAX_BINARIES};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::metrics::{compute_metrics, MetricsReport, PerPolicy};
use crate::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Synthetic,
    Embedding,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Oracle,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingScenario {
    /// Export file; relative paths resolve against the config file's directory.
    pub path: PathBuf,
    pub options: EmbeddingOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub scenario: Scenario,
    /// Generator parameters; the seed is replaced by each experiment seed.
    #[serde(default)]
    pub synthetic: Option<SyntheticConfig>,
    #[serde(default)]
    pub embedding: Option<EmbeddingScenario>,
    pub seeds: Vec<u64>,
    pub horizon: usize,
    #[serde(default)]
    pub backend: BackendKind,
    /// External solver command template; falls back to the environment.
    #[serde(default)]
    pub solver_cmd: Option<String>,
    #[serde(default = "default_max_binaries")]
    pub max_binaries: usize,
    #[serde(default = "default_bins")]
    pub histogram_bins: usize,
}

fn default_name() -> String {
    "experiment".into()
}

fn default_max_binaries() -> usize {
    DEFAULT_MAX_BINARIES
}

fn default_bins() -> usize {
    20
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let mut cfg: ExperimentConfig = serde_json::from_str(&fs::read_to_string(path)?)?;
        if let (Some(emb), Some(dir)) = (cfg.embedding.as_mut(), path.parent()) {
            if emb.path.is_relative() {
                emb.path = dir.join(&emb.path);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        if self.seeds.is_empty() {
            return bad("at least one seed is required");
        }
        if self.horizon == 0 {
            return bad("horizon must be at least 1");
        }
        if self.histogram_bins == 0 {
            return bad("histogram_bins must be at least 1");
        }
        match self.scenario {
            Scenario::Synthetic if self.synthetic.is_none() => bad("synthetic scenario needs a `synthetic` section"),
            Scenario::Embedding if self.embedding.is_none() => bad("embedding scenario needs an `embedding` section"),
            _ => Ok(()),
        }
    }

    pub fn instance(&self, seed: u64) -> Result<EcosystemInstance, HarnessError> {
        let inst = match self.scenario {
            Scenario::Synthetic => {
                let cfg = SyntheticConfig { seed, ..self.synthetic.clone().ok_or_else(|| HarnessError::Config("missing synthetic".into()))? };
                generate_synthetic(&cfg)?
            }
            Scenario::Embedding => {
                let emb = self.embedding.as_ref().ok_or_else(|| HarnessError::Config("missing embedding".into()))?;
                load_embedding_export(&emb.path, &EmbeddingOptions { seed, ..emb.options.clone() })?
            }
        };
        Ok(inst)
    }

    pub fn backend(&self) -> Result<Backend, HarnessError> {
        make_backend(self.backend, self.solver_cmd.as_deref(), self.max_binaries)
    }
}

/// Oracle backend, or the external command from `solver_cmd` or the
/// environment.
pub fn make_backend(kind: BackendKind, solver_cmd: Option<&str>, max_binaries: usize) -> Result<Backend, HarnessError> {
    match kind {
        BackendKind::Oracle => Ok(Backend::Oracle { max_binaries }),
        BackendKind::External => solver_cmd
            .filter(|c| !c.trim().is_empty())
            .map(ExternalSolver::new)
            .or_else(ExternalSolver::from_env)
            .map(Backend::External)
            .ok_or(HarnessError::BackendUnavailable),
    }
}

/// Solutions of all three policy classes.
pub fn solve_policies(inst: &EcosystemInstance, horizon: usize, backend: &Backend) -> Result<PerPolicy<JointSolution>, HarnessError> {
    let solve = |class| solve_joint(&JointMipSpec::new(inst.clone(), horizon, class), backend);
    Ok(PerPolicy {
        prompting: solve(PolicyClass::Prompting)?,
        no_prompt_adaptive: solve(PolicyClass::NoPromptAdaptive)?,
        stationary: solve(PolicyClass::Stationary)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceResult {
    pub seed: u64,
    pub metrics: Option<MetricsReport>,
    pub error: Option<String>,
}

pub fn run_instance(cfg: &ExperimentConfig, backend: &Backend, seed: u64) -> Result<MetricsReport, HarnessError> {
    let inst = cfg.instance(seed)?;
    let solved = solve_policies(&inst, cfg.horizon, backend)?;
    for class in PolicyClass::ALL {
        let report = validate_trajectory(&solved.get(class).trajectory, &inst);
        if let Some(v) = report.first() {
            return Err(HarnessError::Replay(format!("{class}: {} violations, first at stage {}: {}", report.len(), v.stage, v.detail)));
        }
    }
    compute_metrics(&inst, &solved.map(|s| s.trajectory.clone()))
}

/// Runs every seed in parallel. Failures are recorded per seed, never fatal.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<InstanceResult>, HarnessError> {
    cfg.validate()?;
    let backend = cfg.backend()?;
    Ok(cfg
        .seeds
        .par_iter()
        .map(|&seed| match run_instance(cfg, &backend, seed) {
            Ok(m) => {
                info!("seed {seed}: E = {:.6}, Ē = {:.6}, E0 = {:.6}", m.prompting, m.no_prompt, m.stationary);
                InstanceResult { seed, metrics: Some(m), error: None }
            }
            Err(e) => {
                warn!("seed {seed} failed: {e}");
                InstanceResult { seed, metrics: None, error: Some(e.to_string()) }
            }
        })
        .collect())
}

/// Metric columns shared by `metrics.csv` and `aggregate.csv`.
pub const METRIC_NAMES: [&str; 8] = ["E_T", "E", "Ebar_T", "Ebar", "E0", "P_T", "P_hat", "D"];

pub fn metric_values(m: &MetricsReport) -> [Option<f64>; 8] {
    [
        Some(m.final_prompting),
        Some(m.prompting),
        Some(m.final_no_prompt),
        Some(m.no_prompt),
        Some(m.stationary),
        m.final_prompt_gap,
        m.prompt_gap,
        m.stationary_gap,
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub metric: String,
    pub mean: Option<f64>,
    /// Population standard deviation.
    pub sd: Option<f64>,
    pub count: usize,
    pub missing: usize,
}

pub fn aggregate(results: &[InstanceResult]) -> Vec<AggregateRow> {
    METRIC_NAMES
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let values: Vec<f64> = results.iter().filter_map(|r| r.metrics.as_ref().and_then(|m| metric_values(m)[i])).collect();
            let n = values.len();
            let mean = (n > 0).then(|| values.iter().sum::<f64>() / n as f64);
            let sd = mean.map(|mu| (values.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n as f64).sqrt());
            AggregateRow { metric: name.to_string(), mean, sd, count: n, missing: results.len() - n }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub policy: PolicyClass,
    pub bin: usize,
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

/// Equal-width bins over [0, max U_q] pooled across instances and policies;
/// the last bin is closed on the right.
pub fn utility_histogram(results: &[InstanceResult], bins: usize) -> Vec<HistogramRow> {
    let reports: Vec<&MetricsReport> = results.iter().filter_map(|r| r.metrics.as_ref()).collect();
    let max = reports
        .iter()
        .flat_map(|m| PolicyClass::ALL.into_iter().flat_map(move |c| m.user_utility.get(c).iter().copied()))
        .fold(0.0, f64::max);
    let width = max / bins as f64;
    let mut rows = Vec::with_capacity(3 * bins);
    for class in PolicyClass::ALL {
        let mut counts = vec![0usize; bins];
        for u in reports.iter().flat_map(|m| m.user_utility.get(class)) {
            let b = if width > 0.0 { ((u / width) as usize).min(bins - 1) } else { 0 };
            counts[b] += 1;
        }
        for (bin, count) in counts.into_iter().enumerate() {
            rows.push(HistogramRow { policy: class, bin, lower: bin as f64 * width, upper: (bin + 1) as f64 * width, count });
        }
    }
    rows
}

fn cell(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Writes `metrics.csv`, `aggregate.csv`, `per_stage.csv` and
/// `user_utility_histogram.csv` into `dir`.
pub fn write_reports(results: &[InstanceResult], bins: usize, dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("metrics.csv"))?;
    let mut header = vec!["seed", "status"];
    header.extend(METRIC_NAMES);
    header.push("error");
    w.write_record(&header)?;
    for r in results {
        let mut row = vec![r.seed.to_string(), if r.metrics.is_some() { "ok" } else { "failed" }.to_string()];
        match &r.metrics {
            Some(m) => row.extend(metric_values(m).into_iter().map(cell)),
            None => row.extend(METRIC_NAMES.iter().map(|_| String::new())),
        }
        row.push(r.error.clone().unwrap_or_default());
        w.write_record(&row)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("aggregate.csv"))?;
    w.write_record(["metric", "mean", "sd", "count", "missing"])?;
    for a in aggregate(results) {
        w.write_record([a.metric, cell(a.mean), cell(a.sd), a.count.to_string(), a.missing.to_string()])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("per_stage.csv"))?;
    w.write_record(["seed", "policy", "stage", "welfare"])?;
    for r in results {
        if let Some(m) = &r.metrics {
            for class in PolicyClass::ALL {
                for (t, v) in m.stage_welfare.get(class).iter().enumerate() {
                    w.write_record([r.seed.to_string(), class.to_string(), t.to_string(), v.to_string()])?;
                }
            }
        }
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("user_utility_histogram.csv"))?;
    w.write_record(["policy", "bin", "lower", "upper", "count"])?;
    for h in utility_histogram(results, bins) {
        w.write_record([h.policy.to_string(), h.bin.to_string(), h.lower.to_string(), h.upper.to_string(), h.count.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
