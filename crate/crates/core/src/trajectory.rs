//! JSON-lines stage records.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::dynamics::EcosystemState;
use crate::ecosystem::{Matching, Prompt, StageOutcome};
use crate::policy::{Phase, PolicyRun};
use crate::CoreError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: usize,
    pub locations: Vec<usize>,
    pub trust: Vec<f64>,
    pub skill_belief: Vec<Vec<f64>>,
    pub audience_belief: Vec<Vec<f64>>,
    pub matching: Matching,
    pub prompts: Vec<Option<Prompt>>,
    pub outcome: StageOutcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<Phase>,
}

impl StageRecord {
    pub fn new(
        state: &EcosystemState,
        matching: &Matching,
        prompts: &[Option<Prompt>],
        outcome: &StageOutcome,
    ) -> Self {
        StageRecord {
            stage: state.stage,
            locations: state.locations.clone(),
            trust: state.trust.clone(),
            skill_belief: state.skill_belief.clone(),
            audience_belief: state.audience_belief.clone(),
            matching: matching.clone(),
            prompts: prompts.to_vec(),
            outcome: outcome.clone(),
            phase: None,
        }
    }
}

/// Records of a policy run, one per round. Per-round beliefs are not kept by
/// the policy, so the belief fields are left empty.
pub fn policy_records(run: &PolicyRun, k: usize) -> Vec<StageRecord> {
    let providers = run.final_state.num_providers();
    run.steps
        .iter()
        .map(|s| {
            let mut prompts = vec![None; providers];
            prompts[k] = Some(s.prompt);
            let mut locations = run.final_state.locations.clone();
            locations[k] = s.location;
            let mut trust = run.final_state.trust.clone();
            trust[k] = s.trust;
            StageRecord {
                stage: s.stage,
                locations,
                trust,
                skill_belief: Vec::new(),
                audience_belief: Vec::new(),
                matching: s.matching.clone(),
                prompts,
                outcome: s.outcome.clone(),
                phase: Some(s.phase),
            }
        })
        .collect()
}

pub fn write_jsonl<W: Write>(records: &[StageRecord], mut out: W) -> Result<(), CoreError> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<StageRecord>, CoreError> {
    let mut records = Vec::new();
    for line in input.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            records.push(serde_json::from_str(&line)?);
        }
    }
    Ok(records)
}
