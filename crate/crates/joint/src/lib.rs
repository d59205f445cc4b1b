//! Joint prompting of all providers over a finite horizon, posed as a
//! mixed-binary program over locations, prompts, commitments and matchings.

mod build;
mod decode;
mod linearize;
pub mod reference;
mod schedule;
mod solve;
mod validate;

pub use build::{big_m, build_joint_mip, lp_file_name, BigM, JointMip, JointMipSpec, JointVars, PolicyClass};
pub use decode::{decode, ExperimentTrajectory};
pub use linearize::linearize;
pub use schedule::{sequential_schedule_optimum, ScheduleOptimum};
pub use solve::{reduce_for_oracle, solve_joint, JointSolution};
pub use validate::{validate_trajectory, Violation, ViolationKind, REPLAY_TOL};

use promptsim_core::CoreError;
use promptsim_mip::{MipError, Status};

#[derive(Debug, thiserror::Error)]
pub enum JointError {
    #[error("inconsistent spec: {0}")]
    InconsistentSpec(String),
    #[error("product of two continuous variables {0} and {1}")]
    ContinuousProduct(String, String),
    #[error("cannot linearize a product with {0}: bounds must be finite and nonnegative")]
    UnboundedFactor(String),
    #[error("solver returned {0:?}")]
    NotSolved(Status),
    #[error("decode: {0}")]
    Decode(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Mip(#[from] MipError),
}
