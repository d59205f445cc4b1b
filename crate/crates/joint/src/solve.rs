//! Build, linearize, solve and decode.

use promptsim_mip::{solve, Backend, MipModel, Solution, Status, VarKind};

use crate::build::{build_joint_mip, JointMip, JointMipSpec, JointVars};
use crate::decode::{decode, ExperimentTrajectory};
use crate::linearize::linearize;
use crate::JointError;

#[derive(Debug, Clone, PartialEq)]
pub struct JointSolution {
    pub solution: Solution,
    pub trajectory: ExperimentTrajectory,
}

/// Shrinks the binary search space without changing the optimum:
/// - Vis becomes continuous in [0, 1]; the running-maximum constraints force
///   it to 0 or 1 once Act is integral, and its products are already
///   linearized exactly at integral values.
/// - Prompts in the last stage have no later effect and are fixed to zero
///   together with their commitments.
pub fn reduce_for_oracle(model: &mut MipModel, vars: &JointVars) {
    for row in vars.vis.iter().flatten() {
        for &v in row {
            model.var_mut(v).kind = VarKind::Continuous;
        }
    }
    for (nu_row, c_row) in vars.nu.iter().flatten().zip(vars.commitment.iter().flatten()) {
        if let (Some(&nu), Some(&c)) = (nu_row.last(), c_row.last()) {
            model.var_mut(nu).upper = 0.0;
            model.var_mut(c).upper = 0.0;
        }
    }
}

/// Solves the linearized program with `backend` and decodes the optimum.
pub fn solve_joint(spec: &JointMipSpec, backend: &Backend) -> Result<JointSolution, JointError> {
    let JointMip { model, vars } = build_joint_mip(spec)?;
    let mut model = linearize(&model)?;
    if matches!(backend, Backend::Oracle { .. }) {
        reduce_for_oracle(&mut model, &vars);
    }
    let solution = solve(&model, backend)?;
    if solution.status != Status::Optimal {
        return Err(JointError::NotSolved(solution.status));
    }
    let trajectory = decode(&vars, &solution.values, spec.policy_class, solution.objective)?;
    Ok(JointSolution { solution, trajectory })
}
