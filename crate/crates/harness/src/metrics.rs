//! Welfare metrics comparing the prompting, adaptive no-prompt and
//! stationary policies on one instance.

use promptsim_core::EcosystemInstance;
use promptsim_joint::{ExperimentTrajectory, PolicyClass};
use serde::{Deserialize, Serialize};

use crate::HarnessError;

/// Denominators at or below this magnitude leave a ratio undefined.
pub const DIVISION_GUARD: f64 = 1e-12;

/// One value per policy class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerPolicy<T> {
    pub prompting: T,
    pub no_prompt_adaptive: T,
    pub stationary: T,
}

impl<T> PerPolicy<T> {
    pub fn get(&self, class: PolicyClass) -> &T {
        match class {
            PolicyClass::Prompting => &self.prompting,
            PolicyClass::NoPromptAdaptive => &self.no_prompt_adaptive,
            PolicyClass::Stationary => &self.stationary,
        }
    }

    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> PerPolicy<U> {
        PerPolicy { prompting: f(&self.prompting), no_prompt_adaptive: f(&self.no_prompt_adaptive), stationary: f(&self.stationary) }
    }

    pub fn try_map<U, E>(&self, mut f: impl FnMut(&T) -> Result<U, E>) -> Result<PerPolicy<U>, E> {
        Ok(PerPolicy {
            prompting: f(&self.prompting)?,
            no_prompt_adaptive: f(&self.no_prompt_adaptive)?,
            stationary: f(&self.stationary)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Final-stage welfare E^T of the prompting policy.
    pub final_prompting: f64,
    /// Time-averaged welfare E of the prompting policy.
    pub prompting: f64,
    /// Ē^T and Ē for the adaptive policy without prompts.
    pub final_no_prompt: f64,
    pub no_prompt: f64,
    /// Time-averaged welfare E₀ of the stationary policy.
    pub stationary: f64,
    /// P^T = (E^T − Ē^T)/Ē^T.
    pub final_prompt_gap: Option<f64>,
    /// P̂ = (E − Ē)/Ē.
    pub prompt_gap: Option<f64>,
    /// D = (Ē − E₀)/E₀.
    pub stationary_gap: Option<f64>,
    /// Time-averaged utility U_q of every user.
    pub user_utility: PerPolicy<Vec<f64>>,
    /// Σ_k E_k^t per stage.
    pub stage_welfare: PerPolicy<Vec<f64>>,
}

pub fn relative_gap(value: f64, baseline: f64) -> Option<f64> {
    (baseline.abs() > DIVISION_GUARD).then(|| (value - baseline) / baseline)
}

/// U_q = (1/T)·Σ_t Σ_k π^t_{q,k}·s*_{k,L_k}·σ(q, L_k), from the recorded
/// locations and matchings.
pub fn user_utilities(traj: &ExperimentTrajectory, inst: &EcosystemInstance) -> Result<Vec<f64>, HarnessError> {
    let horizon = traj.stages.len();
    if horizon == 0 {
        return Err(HarnessError::Metrics("empty trajectory".into()));
    }
    let mut utility = vec![0.0; inst.num_users()];
    for rec in &traj.stages {
        inst.check_locations(&rec.locations)?;
        if rec.matching.probs.len() != inst.num_users() {
            return Err(HarnessError::Metrics("matching does not cover every user".into()));
        }
        for (q, (row, sigma)) in rec.matching.probs.iter().zip(&inst.affinity).enumerate() {
            for (k, &p) in row.iter().enumerate() {
                let j = rec.locations[k];
                utility[q] += p * sigma[j] * inst.true_skill[k][j];
            }
        }
    }
    Ok(utility.into_iter().map(|u| u / horizon as f64).collect())
}

/// Per-stage welfare recomputed from locations and matchings.
pub fn stage_welfare(traj: &ExperimentTrajectory, inst: &EcosystemInstance) -> Result<Vec<f64>, HarnessError> {
    traj.stages
        .iter()
        .map(|rec| Ok(promptsim_core::matching_value(&rec.matching, &rec.locations, inst)?))
        .collect()
}

pub fn compute_metrics(
    inst: &EcosystemInstance,
    trajectories: &PerPolicy<ExperimentTrajectory>,
) -> Result<MetricsReport, HarnessError> {
    let horizon = trajectories.prompting.stages.len();
    if [&trajectories.no_prompt_adaptive, &trajectories.stationary].iter().any(|t| t.stages.len() != horizon) || horizon == 0 {
        return Err(HarnessError::Metrics("trajectories must share one nonzero horizon".into()));
    }
    let stage = trajectories.try_map(|t| stage_welfare(t, inst))?;
    let user_utility = trajectories.try_map(|t| user_utilities(t, inst))?;
    let average = |w: &Vec<f64>| w.iter().sum::<f64>() / horizon as f64;
    let last = |w: &Vec<f64>| w[horizon - 1];
    let (prompting, no_prompt, stationary) =
        (average(&stage.prompting), average(&stage.no_prompt_adaptive), average(&stage.stationary));
    let (final_prompting, final_no_prompt) = (last(&stage.prompting), last(&stage.no_prompt_adaptive));
    Ok(MetricsReport {
        final_prompting,
        prompting,
        final_no_prompt,
        no_prompt,
        stationary,
        final_prompt_gap: relative_gap(final_prompting, final_no_prompt),
        prompt_gap: relative_gap(prompting, no_prompt),
        stationary_gap: relative_gap(no_prompt, stationary),
        user_utility,
        stage_welfare: stage,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gap_formula_and_guard() {
        assert!((relative_gap(1.1, 1.0).unwrap() - 0.1).abs() < 1e-12);
        assert_eq!(relative_gap(1.0, 1.0), Some(0.0));
        assert_eq!(relative_gap(1.0, 0.0), None);
    }
}
