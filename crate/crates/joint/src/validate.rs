//! Independent replay of a decoded trajectory through the provider dynamics.

use promptsim_core::{
    apply_prompt_belief, collapse_audience_belief, collapse_skill_belief, EcosystemInstance, PromptMode,
};
use serde::{Deserialize, Serialize};

use crate::decode::ExperimentTrajectory;

pub const REPLAY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Shape,
    Matching,
    BeliefMismatch,
    NotBestResponse,
    OutcomeMismatch,
    Undelivered,
    Commitment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub stage: usize,
    pub provider: Option<usize>,
    pub kind: ViolationKind,
    pub detail: String,
}

/// Replays the locations, matchings and prompts of `traj` from the initial
/// beliefs with collapsing updates and full-trust prompts. Reports every
/// stage where a location is not a believed best response, a recorded belief
/// or outcome disagrees with the replay, or an accepted commitment is not
/// delivered.
pub fn validate_trajectory(traj: &ExperimentTrajectory, inst: &EcosystemInstance) -> Vec<Violation> {
    let mut report = Vec::new();
    let (nk, nj) = (inst.num_providers(), inst.num_content());
    let mut skill = inst.initial_skill_belief.clone();
    let mut aud = inst.initial_audience_belief.clone();
    let mut issued: Vec<Option<promptsim_core::Prompt>> = vec![None; nk];
    if traj.stages.len() != traj.horizon {
        report.push(violation(0, None, ViolationKind::Shape, format!("{} stages for horizon {}", traj.stages.len(), traj.horizon)));
    }
    for (t, rec) in traj.stages.iter().enumerate() {
        let shape_ok = rec.locations.len() == nk
            && rec.prompts.len() == nk
            && rec.outcome.audience.len() == nk
            && rec.outcome.utility.len() == nk
            && rec.skill_belief.len() == nk
            && rec.audience_belief.len() == nk
            && rec.skill_belief.iter().chain(&rec.audience_belief).all(|r| r.len() == nj)
            && rec.locations.iter().all(|&l| l < nj)
            && rec.matching.probs.len() == inst.num_users()
            && rec.matching.probs.iter().all(|r| r.len() == nk);
        if !shape_ok {
            report.push(violation(t, None, ViolationKind::Shape, "record dimensions disagree with the instance".into()));
            return report;
        }
        if let Err(e) = rec.matching.validate() {
            report.push(violation(t, None, ViolationKind::Matching, e.to_string()));
        }
        for k in 0..nk {
            let at = rec.locations[k];
            for j in 0..nj {
                let (ds, da) = (rec.skill_belief[k][j] - skill[k][j], rec.audience_belief[k][j] - aud[k][j]);
                if ds.abs() > REPLAY_TOL || da.abs() > REPLAY_TOL {
                    report.push(violation(
                        t,
                        Some(k),
                        ViolationKind::BeliefMismatch,
                        format!(
                            "point {j}: recorded ({}, {}) replayed ({}, {})",
                            rec.skill_belief[k][j], rec.audience_belief[k][j], skill[k][j], aud[k][j]
                        ),
                    ));
                }
            }
            let believed: Vec<f64> = (0..nj).map(|j| skill[k][j] * aud[k][j]).collect();
            let best = believed.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if believed[at] < best - REPLAY_TOL {
                report.push(violation(
                    t,
                    Some(k),
                    ViolationKind::NotBestResponse,
                    format!("point {at} believed {} below best {best}", believed[at]),
                ));
            }
            let (mut audience, mut utility) = (0.0, 0.0);
            for (q, sigma) in inst.affinity.iter().enumerate() {
                let p = rec.matching.probs[q][k];
                audience += p * sigma[at];
                utility += p * sigma[at] * inst.true_skill[k][at];
            }
            if (audience - rec.outcome.audience[k]).abs() > REPLAY_TOL || (utility - rec.outcome.utility[k]).abs() > REPLAY_TOL {
                report.push(violation(
                    t,
                    Some(k),
                    ViolationKind::OutcomeMismatch,
                    format!(
                        "recorded audience {} utility {}, replayed {audience} {utility}",
                        rec.outcome.audience[k], rec.outcome.utility[k]
                    ),
                ));
            }
            if let Some(p) = issued[k] {
                if p.target == at && audience < p.commitment - REPLAY_TOL {
                    report.push(violation(
                        t,
                        Some(k),
                        ViolationKind::Undelivered,
                        format!("commitment {} at point {at}, delivered {audience}", p.commitment),
                    ));
                }
            }
            skill[k] = collapse_skill_belief(&skill[k], at, inst, k);
            aud[k] = collapse_audience_belief(&aud[k], at, audience);
            if let Some(p) = rec.prompts[k] {
                let bound = if p.target < nj { inst.column_audience(p.target) } else { 0.0 };
                match apply_prompt_belief(&aud[k], p, 1.0, PromptMode::Full, bound) {
                    Ok(row) => aud[k] = row,
                    Err(e) => report.push(violation(t, Some(k), ViolationKind::Commitment, e.to_string())),
                }
            }
        }
        issued.clone_from(&rec.prompts);
    }
    report
}

fn violation(stage: usize, provider: Option<usize>, kind: ViolationKind, detail: String) -> Violation {
    Violation { stage, provider, kind, detail }
}
