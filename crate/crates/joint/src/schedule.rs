//! Best prompting value when providers relocate one at a time.

use promptsim_core::EcosystemInstance;
use promptsim_mip::{enumerate_binaries_solve, Status};
use serde::{Deserialize, Serialize};

use crate::build::{build_joint_mip, JointMip, JointMipSpec, PolicyClass};
use crate::linearize::linearize;
use crate::solve::reduce_for_oracle;
use crate::JointError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleOptimum {
    /// Time-averaged welfare of the best sequential schedule.
    pub value: f64,
    /// Locations per stage of that schedule.
    pub locations: Vec<Vec<usize>>,
    /// Schedules enumerated, and how many admitted a feasible policy.
    pub schedules: usize,
    pub feasible: usize,
}

/// Enumerates every location schedule in which at most one provider changes
/// location between consecutive stages, solves the prompting program with
/// those locations fixed, and returns the best. Prompts and matchings stay
/// free, so this is the strongest one-at-a-time policy.
pub fn sequential_schedule_optimum(
    inst: &EcosystemInstance,
    horizon: usize,
    max_binaries: usize,
) -> Result<ScheduleOptimum, JointError> {
    let spec = JointMipSpec::new(inst.clone(), horizon, PolicyClass::Prompting);
    let JointMip { model, vars } = build_joint_mip(&spec)?;
    let mut base = linearize(&model)?;
    reduce_for_oracle(&mut base, &vars);
    let (nk, nj) = (inst.num_providers(), inst.num_content());
    let profiles: Vec<Vec<usize>> = (0..nj.pow(nk as u32))
        .map(|mut code| {
            (0..nk)
                .map(|_| {
                    let j = code % nj;
                    code /= nj;
                    j
                })
                .collect()
        })
        .collect();
    let mut best: Option<(f64, Vec<Vec<usize>>)> = None;
    let (mut schedules, mut feasible) = (0, 0);
    let mut stack: Vec<Vec<Vec<usize>>> = profiles.iter().map(|p| vec![p.clone()]).collect();
    while let Some(schedule) = stack.pop() {
        if schedule.len() < horizon {
            let last = schedule.last().expect("schedules start non-empty");
            for p in profiles.iter().filter(|p| p.iter().zip(last).filter(|(a, b)| a != b).count() <= 1) {
                let mut next = schedule.clone();
                next.push(p.clone());
                stack.push(next);
            }
            continue;
        }
        schedules += 1;
        let mut fixed = base.clone();
        for (t, profile) in schedule.iter().enumerate() {
            for (k, &loc) in profile.iter().enumerate() {
                for j in 0..nj {
                    let v = fixed.var_mut(vars.act[k][j][t]);
                    let x = if j == loc { 1.0 } else { 0.0 };
                    v.lower = x;
                    v.upper = x;
                }
            }
        }
        let sol = enumerate_binaries_solve(&fixed, max_binaries)?;
        if sol.status != Status::Optimal {
            continue;
        }
        feasible += 1;
        let better = best.as_ref().is_none_or(|(v, s)| sol.objective > v + 1e-12 || (sol.objective > v - 1e-12 && schedule < *s));
        if better {
            best = Some((sol.objective, schedule));
        }
    }
    let (value, locations) = best.ok_or(JointError::NotSolved(Status::Infeasible))?;
    Ok(ScheduleOptimum { value, locations, schedules, feasible })
}
