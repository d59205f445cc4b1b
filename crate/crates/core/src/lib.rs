//! Recommender-ecosystem model: providers choose content points from their
//! skill and audience beliefs, the recommender matches users to providers and
//! may prompt providers with audience commitments.

pub mod dynamics;
pub mod ecosystem;
pub mod instance_gen;
pub mod planner;
pub mod policy;
pub mod trajectory;

pub use dynamics::{
    apply_prompt_belief, best_response, collapse_audience_belief, collapse_skill_belief, is_myopically_stable,
    is_non_myopically_stable, is_non_myopically_stable_with, is_rationalizable, observe, respond, step,
    update_trust, AudienceUpdate, EcosystemState, HalfState, PromptMode, StepOptions,
};
pub use ecosystem::{
    matching_value, natural_matching, realize, utility, EcosystemInstance, Matching, Prompt, RealizeMode,
    StageOutcome, TOL,
};

use promptsim_mip::MipError;

#[derive(Debug, thiserror::Error)]
pub enum CoreError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid value: {0}")]
    InvalidValue(String),
    #[error("{what} index {index} out of range (size {len})")]
    IndexOutOfRange { what: &'static str, index: usize, len: usize },
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("matching row {row} sums to {sum}")]
    UnnormalizedMatching { row: usize, sum: f64 },
    #[error("empty content catalog")]
    EmptyCatalog,
    #[error("state is not rationalizable")]
    NotRationalizable,
    #[error("provider {0} has zero trust and cannot be influenced")]
    Uninfluenceable(usize),
    #[error("point {0} has zero believed skill; no commitment makes it a best response")]
    Unincentivizable(usize),
    #[error("point {target} needs commitment {needed} above the audience bound {bound}")]
    TargetNotIncentivizable { target: usize, needed: f64, bound: f64 },
    #[error("policy did not terminate within {0} rounds")]
    MaxRoundsExceeded(usize),
    #[error("dynamics did not settle within {0} steps")]
    NoTermination(usize),
    #[error("target {0} is not reachable")]
    Unreachable(usize),
    #[error("model has {size} points, above the search limit {max}")]
    TooLarge { size: usize, max: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Mip(#[from] MipError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
