//! Solution vector to per-stage records.

use std::io::{BufRead, Write};

use promptsim_core::trajectory::{read_jsonl, write_jsonl, StageRecord};
use promptsim_core::{Matching, Prompt, StageOutcome};
use serde::{Deserialize, Serialize};

use crate::build::{JointVars, PolicyClass};
use crate::JointError;

/// Decoded joint policy: one record per stage with locations, prompts issued
/// at that stage (effective next stage), the matching, the beliefs held at
/// the start of the stage, and realized audiences and utilities. Trust is 1
/// throughout since the program models full-trust prompts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentTrajectory {
    pub policy_class: PolicyClass,
    pub horizon: usize,
    pub objective: f64,
    pub stages: Vec<StageRecord>,
}

impl ExperimentTrajectory {
    /// Σ_k E_k^t per stage.
    pub fn stage_welfare(&self) -> Vec<f64> {
        self.stages.iter().map(|s| s.outcome.utility.iter().sum()).collect()
    }

    /// (1/T)·Σ_t Σ_k E_k^t recomputed from the records.
    pub fn time_averaged_welfare(&self) -> f64 {
        self.stage_welfare().iter().sum::<f64>() / self.horizon.max(1) as f64
    }

    pub fn write_jsonl<W: Write>(&self, out: W) -> Result<(), JointError> {
        Ok(write_jsonl(&self.stages, out)?)
    }

    /// Rebuilds a trajectory from stage records; the objective is recomputed.
    pub fn read_jsonl<R: BufRead>(input: R, policy_class: PolicyClass) -> Result<Self, JointError> {
        let stages = read_jsonl(input)?;
        let mut traj = ExperimentTrajectory { policy_class, horizon: stages.len(), objective: 0.0, stages };
        traj.objective = traj.time_averaged_welfare();
        Ok(traj)
    }
}

/// Reads a solution of the model built for `vars`. Binary values are rounded;
/// tiny negative continuous values from the simplex are clipped to zero.
pub fn decode(
    vars: &JointVars,
    values: &[f64],
    policy_class: PolicyClass,
    objective: f64,
) -> Result<ExperimentTrajectory, JointError> {
    let value = |v: promptsim_mip::VarId| {
        values.get(v.0).copied().ok_or_else(|| JointError::Decode(format!("missing value for variable {}", v.0)))
    };
    let (nk, nq) = (vars.act.len(), vars.pi.len());
    let nj = vars.act.first().map_or(0, Vec::len);
    let nt = vars.utility.first().map_or(0, Vec::len);
    let mut stages = Vec::with_capacity(nt);
    for t in 0..nt {
        let mut locations = Vec::with_capacity(nk);
        let mut prompts = Vec::with_capacity(nk);
        let mut skill_belief = Vec::with_capacity(nk);
        let mut audience_belief = Vec::with_capacity(nk);
        for k in 0..nk {
            let row = (0..nj).map(|j| value(vars.act[k][j][t])).collect::<Result<Vec<_>, _>>()?;
            let active: Vec<usize> = (0..nj).filter(|&j| row[j] > 0.5).collect();
            match active.as_slice() {
                [j] => locations.push(*j),
                _ => return Err(JointError::Decode(format!("provider {k} active at {active:?} in stage {t}"))),
            }
            let mut prompt = None;
            for j in 0..nj {
                if value(vars.nu[k][j][t])? > 0.5 {
                    if prompt.is_some() {
                        return Err(JointError::Decode(format!("provider {k} prompted twice in stage {t}")));
                    }
                    prompt = Some(Prompt { target: j, commitment: value(vars.commitment[k][j][t])?.max(0.0) });
                }
            }
            prompts.push(prompt);
            skill_belief.push((0..nj).map(|j| value(vars.skill_belief[k][j][t])).collect::<Result<Vec<_>, _>>()?);
            audience_belief.push(
                (0..nj).map(|j| value(vars.audience_belief[k][j][t]).map(|a| a.max(0.0))).collect::<Result<Vec<_>, _>>()?,
            );
        }
        let mut probs = Vec::with_capacity(nq);
        for q in 0..nq {
            let row: Vec<f64> = (0..nk).map(|k| value(vars.pi[q][k][t]).map(|p| p.clamp(0.0, 1.0))).collect::<Result<_, _>>()?;
            let total: f64 = row.iter().sum();
            if total <= 0.0 {
                return Err(JointError::Decode(format!("matching row {q} is empty in stage {t}")));
            }
            probs.push(row.iter().map(|p| p / total).collect());
        }
        let matching = Matching::new(probs)?;
        let outcome = StageOutcome {
            audience: (0..nk).map(|k| value(vars.audience[k][t])).collect::<Result<_, _>>()?,
            utility: (0..nk).map(|k| value(vars.utility[k][t])).collect::<Result<_, _>>()?,
        };
        stages.push(StageRecord {
            stage: t,
            locations,
            trust: vec![1.0; nk],
            skill_belief,
            audience_belief,
            matching,
            prompts,
            outcome,
            phase: None,
        });
    }
    Ok(ExperimentTrajectory { policy_class, horizon: nt, objective, stages })
}
