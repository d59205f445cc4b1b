//! Big-M replacement of binary products: `y = x·I` becomes a variable `y`
//! with `y ≤ I·M`, `y ≥ 0`, `y ≤ x` and `y ≥ x − (1 − I)·M`, where `M` is
//! the upper bound of `x`.

use std::collections::HashMap;

use promptsim_mip::{Expr, MipModel, Sense, VarId, VarKind};

use crate::JointError;

/// Returns an equivalent model without product terms. Identical products
/// share one auxiliary variable.
pub fn linearize(model: &MipModel) -> Result<MipModel, JointError> {
    let mut out = model.clone();
    let mut aux: HashMap<(VarId, VarId), VarId> = HashMap::new();
    let mut rewrite = |out: &mut MipModel, expr: &Expr| -> Result<Expr, JointError> {
        let mut linear = Expr { terms: expr.terms.clone(), products: Vec::new(), constant: expr.constant };
        for &(a, b, coef) in &expr.products {
            let (gate, factor) = match (out.var(a).kind, out.var(b).kind) {
                (VarKind::Binary, _) => (a, b),
                (_, VarKind::Binary) => (b, a),
                _ => return Err(JointError::ContinuousProduct(out.var(a).name.clone(), out.var(b).name.clone())),
            };
            let y = match aux.get(&(gate, factor)) {
                Some(&y) => y,
                None => {
                    let y = add_product_var(out, gate, factor)?;
                    aux.insert((gate, factor), y);
                    y
                }
            };
            linear.add_term(y, coef);
        }
        Ok(linear)
    };
    let objective = rewrite(&mut out, &model.objective)?;
    out.objective = objective;
    for i in 0..model.constraints.len() {
        let expr = rewrite(&mut out, &model.constraints[i].expr)?;
        out.constraints[i].expr = expr;
    }
    Ok(out)
}

fn add_product_var(model: &mut MipModel, gate: VarId, factor: VarId) -> Result<VarId, JointError> {
    let (lo, hi, name) = {
        let x = model.var(factor);
        (x.lower, x.upper, x.name.clone())
    };
    if !(lo >= 0.0 && hi.is_finite()) {
        return Err(JointError::UnboundedFactor(name));
    }
    let gate_name = model.var(gate).name.clone();
    let y = model.add_continuous(format!("lin_{gate_name}_{name}"), 0.0, hi)?;
    let base = format!("lin_{gate_name}_{name}");
    model.add_constraint(format!("{base}_gate"), Expr::new().with_term(y, 1.0).with_term(gate, -hi), Sense::Le, 0.0);
    model.add_constraint(format!("{base}_cap"), Expr::new().with_term(y, 1.0).with_term(factor, -1.0), Sense::Le, 0.0);
    model.add_constraint(
        format!("{base}_floor"),
        Expr::new().with_term(y, 1.0).with_term(factor, -1.0).with_term(gate, -hi),
        Sense::Ge,
        -hi,
    );
    Ok(y)
}
