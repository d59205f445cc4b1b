//! Exhaustive cross-check for tiny programs: every location and prompt
//! schedule is fixed in turn in the unlinearized model and the remaining
//! linear program goes straight to the simplex. Shares neither the
//! linearization nor the binary enumerator with [`crate::solve_joint`].

use promptsim_mip::{simplex_solve, Expr, MipModel, Solution, Status, VarKind};

use crate::build::{build_joint_mip, JointMipSpec};
use crate::JointError;

/// Upper bound on the number of schedules tried.
pub const MAX_SCHEDULES: usize = 1 << 20;

/// Replaces every binary by the constant in `fixed` (indexed by variable) and
/// turns binary products into linear terms. The result has only continuous
/// variables; fixed binaries stay as continuous variables with equal bounds.
pub fn fix_binaries(model: &MipModel, fixed: &[Option<f64>]) -> Result<MipModel, JointError> {
    let mut out = model.clone();
    for (i, v) in out.vars.iter_mut().enumerate() {
        if v.kind == VarKind::Binary {
            let x = fixed.get(i).copied().flatten().ok_or_else(|| JointError::Decode(format!("binary {} not fixed", v.name)))?;
            v.lower = x;
            v.upper = x;
            v.kind = VarKind::Continuous;
        }
    }
    let substitute = |expr: &Expr| -> Result<Expr, JointError> {
        let mut e = Expr { terms: expr.terms.clone(), products: Vec::new(), constant: expr.constant };
        for &(a, b, c) in &expr.products {
            match (fixed.get(a.0).copied().flatten(), fixed.get(b.0).copied().flatten()) {
                (Some(x), _) => e.add_term(b, c * x),
                (None, Some(y)) => e.add_term(a, c * y),
                (None, None) => {
                    return Err(JointError::ContinuousProduct(model.var(a).name.clone(), model.var(b).name.clone()))
                }
            };
        }
        Ok(e)
    };
    out.objective = substitute(&model.objective)?;
    for (dst, src) in out.constraints.iter_mut().zip(&model.constraints) {
        dst.expr = substitute(&src.expr)?;
    }
    Ok(out)
}

/// Best objective over all schedules, and the maximizing point in the
/// unlinearized model's variable order. Ties keep the first schedule in
/// enumeration order.
pub fn brute_force(spec: &JointMipSpec) -> Result<Solution, JointError> {
    let joint = build_joint_mip(spec)?;
    let vars = &joint.vars;
    let inst = &spec.instance;
    let (nk, nj, nt) = (inst.num_providers(), inst.num_content(), spec.horizon);
    let prompt_options = if spec.policy_class.allows_prompts() { nj + 1 } else { 1 };
    let slots = nk * nt;
    let per_slot = nj * prompt_options;
    let total = (per_slot as f64).powi(slots as i32);
    if total > MAX_SCHEDULES as f64 {
        return Err(JointError::InconsistentSpec(format!("{total} schedules exceed the brute-force limit {MAX_SCHEDULES}")));
    }
    let mut best = Solution::without_point(Status::Infeasible);
    let mut code = vec![0usize; slots];
    loop {
        let mut fixed = vec![None; joint.model.num_vars()];
        for k in 0..nk {
            let mut seen = vec![false; nj];
            for t in 0..nt {
                let c = code[k * nt + t];
                let (loc, prompt) = (c % nj, c / nj);
                seen[loc] = true;
                for j in 0..nj {
                    fixed[vars.act[k][j][t].0] = Some(if j == loc { 1.0 } else { 0.0 });
                    fixed[vars.nu[k][j][t].0] = Some(if prompt == j + 1 { 1.0 } else { 0.0 });
                    fixed[vars.vis[k][j][t].0] = Some(if seen[j] { 1.0 } else { 0.0 });
                }
            }
        }
        let lp = fix_binaries(&joint.model, &fixed)?;
        let sol = simplex_solve(&lp)?;
        if sol.status == Status::Optimal && (best.status != Status::Optimal || sol.objective > best.objective + 1e-12) {
            best = sol;
        }
        // Odometer increment over the schedule code.
        let mut i = 0;
        while i < slots {
            code[i] += 1;
            if code[i] < per_slot {
                break;
            }
            code[i] = 0;
            i += 1;
        }
        if i == slots {
            break;
        }
    }
    Ok(best)
}
