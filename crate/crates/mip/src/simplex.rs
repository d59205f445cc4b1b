//! Dense two-phase primal simplex with Bland's rule.
//!
//! The tableau is dense; models here are desk-sized. A light presolve
//! (fixed-variable substitution, singleton rows to bounds, redundant rows)
//! runs first, which keeps the per-leaf problems of the binary enumerator small.

use crate::model::{MipModel, ObjectiveSense, Sense, Solution, Status, VarKind};
use crate::MipError;

#[derive(Debug, Clone, Copy)]
pub struct SimplexOptions {
    /// Pivot, reduced-cost and feasibility tolerance.
    pub tol: f64,
    pub max_rows: usize,
    pub max_cols: usize,
    pub max_iterations: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions { tol: 1e-9, max_rows: 2000, max_cols: 2000, max_iterations: 100_000 }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct LpRow {
    pub coefs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// `minimize cost·x` subject to rows and bounds.
#[derive(Debug, Clone)]
pub(crate) struct LinearProgram {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub rows: Vec<LpRow>,
    pub cost: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum LpOutcome {
    Optimal(Vec<f64>),
    Infeasible,
    Unbounded,
    IterationLimit,
}

/// Solves an all-continuous linear model.
pub fn simplex_solve(model: &MipModel) -> Result<Solution, MipError> {
    simplex_solve_with(model, &SimplexOptions::default())
}

pub fn simplex_solve_with(model: &MipModel, opts: &SimplexOptions) -> Result<Solution, MipError> {
    model.validate()?;
    if let Some(v) = model.vars.iter().find(|v| v.kind != VarKind::Continuous) {
        return Err(MipError::NotContinuous(v.name.clone()));
    }
    if !model.is_linear() {
        return Err(MipError::NonLinear("simplex_solve requires a linear model".into()));
    }
    let sign = match model.sense {
        ObjectiveSense::Minimize => 1.0,
        ObjectiveSense::Maximize => -1.0,
    };
    let mut cost = vec![0.0; model.num_vars()];
    for &(v, c) in &model.objective.terms {
        cost[v.0] += sign * c;
    }
    let lp = LinearProgram {
        lower: model.vars.iter().map(|v| v.lower).collect(),
        upper: model.vars.iter().map(|v| v.upper).collect(),
        rows: model
            .constraints
            .iter()
            .map(|c| LpRow { coefs: c.expr.terms.iter().map(|&(v, a)| (v.0, a)).collect(), sense: c.sense, rhs: c.rhs })
            .collect(),
        cost,
    };
    Ok(match lp.solve(opts)? {
        LpOutcome::Optimal(x) => Solution { status: Status::Optimal, objective: model.objective.eval(&x), values: x },
        LpOutcome::Infeasible => Solution::without_point(Status::Infeasible),
        LpOutcome::Unbounded => Solution::without_point(Status::Unbounded),
        LpOutcome::IterationLimit => Solution::without_point(Status::Limit),
    })
}

fn merge_terms(coefs: &[(usize, f64)]) -> Vec<(usize, f64)> {
    let mut sorted = coefs.to_vec();
    sorted.sort_by_key(|&(j, _)| j);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(sorted.len());
    for (j, a) in sorted {
        match out.last_mut() {
            Some(last) if last.0 == j => last.1 += a,
            _ => out.push((j, a)),
        }
    }
    out.retain(|&(_, a)| a != 0.0);
    out
}

/// Column of the standard-form problem: `x[var] = offset + sign * y`.
#[derive(Debug, Clone, Copy)]
struct Column {
    var: usize,
    sign: f64,
}

impl LinearProgram {
    pub fn solve(&self, opts: &SimplexOptions) -> Result<LpOutcome, MipError> {
        let tol = opts.tol;
        let n = self.lower.len();
        let mut lower = self.lower.clone();
        let mut upper = self.upper.clone();
        let mut rows: Vec<Option<LpRow>> = self
            .rows
            .iter()
            .map(|r| Some(LpRow { coefs: merge_terms(&r.coefs), sense: r.sense, rhs: r.rhs }))
            .collect();
        if lower.iter().zip(&upper).any(|(l, u)| l > &(u + tol)) {
            return Ok(LpOutcome::Infeasible);
        }
        if !presolve(&mut rows, &mut lower, &mut upper, tol) {
            return Ok(LpOutcome::Infeasible);
        }
        let fixed: Vec<bool> = (0..n).map(|j| upper[j] - lower[j] <= 1e-12).collect();

        // Standard form columns.
        let mut columns = Vec::new();
        let mut offset = vec![0.0; n];
        let mut ub_rows: Vec<(usize, f64)> = Vec::new();
        for j in 0..n {
            if fixed[j] {
                offset[j] = lower[j];
                continue;
            }
            let (lo, hi) = (lower[j], upper[j]);
            if lo.is_finite() {
                offset[j] = lo;
                columns.push(Column { var: j, sign: 1.0 });
                if hi.is_finite() {
                    ub_rows.push((columns.len() - 1, hi - lo));
                }
            } else if hi.is_finite() {
                offset[j] = hi;
                columns.push(Column { var: j, sign: -1.0 });
            } else {
                columns.push(Column { var: j, sign: 1.0 });
                columns.push(Column { var: j, sign: -1.0 });
            }
        }
        let mut col_of_var: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (c, col) in columns.iter().enumerate() {
            col_of_var[col.var].push(c);
        }

        // Rows over columns: (dense coefficients, sense, rhs).
        let ncols = columns.len();
        let mut std_rows: Vec<(Vec<f64>, Sense, f64)> = Vec::new();
        for row in rows.iter().flatten() {
            let mut dense = vec![0.0; ncols];
            let mut rhs = row.rhs;
            for &(j, a) in &row.coefs {
                rhs -= a * offset[j];
                for &c in &col_of_var[j] {
                    dense[c] += a * columns[c].sign;
                }
            }
            std_rows.push((dense, row.sense, rhs));
        }
        for &(c, width) in &ub_rows {
            let mut dense = vec![0.0; ncols];
            dense[c] = 1.0;
            std_rows.push((dense, Sense::Le, width));
        }
        if std_rows.len() > opts.max_rows || ncols > opts.max_cols {
            return Err(MipError::SizeLimit { rows: std_rows.len(), cols: ncols });
        }
        let mut cost = vec![0.0; ncols];
        for (c, col) in columns.iter().enumerate() {
            cost[c] = self.cost[col.var] * col.sign;
        }

        let y = match run_two_phase(std_rows, &cost, opts)? {
            Phase::Optimal(y) => y,
            Phase::Infeasible => return Ok(LpOutcome::Infeasible),
            Phase::Unbounded => return Ok(LpOutcome::Unbounded),
            Phase::Limit => return Ok(LpOutcome::IterationLimit),
        };
        let mut x = offset;
        for (c, col) in columns.iter().enumerate() {
            x[col.var] += col.sign * y[c];
        }
        Ok(LpOutcome::Optimal(x))
    }
}

/// Returns `false` when infeasibility is detected.
fn presolve(rows: &mut [Option<LpRow>], lower: &mut [f64], upper: &mut [f64], tol: f64) -> bool {
    loop {
        let mut changed = false;
        for slot in rows.iter_mut() {
            let Some(row) = slot.as_mut() else { continue };
            // Substitute fixed variables.
            let mut rhs = row.rhs;
            row.coefs.retain(|&(j, a)| {
                if upper[j] - lower[j] <= 1e-12 {
                    rhs -= a * lower[j];
                    false
                } else {
                    true
                }
            });
            row.rhs = rhs;
            match row.coefs.len() {
                0 => {
                    if !row.sense.holds(0.0, row.rhs, tol * row.rhs.abs().max(1.0)) {
                        return false;
                    }
                    *slot = None;
                    changed = true;
                }
                1 => {
                    let (j, a) = row.coefs[0];
                    let v = row.rhs / a;
                    let sense = if a < 0.0 {
                        match row.sense {
                            Sense::Le => Sense::Ge,
                            Sense::Ge => Sense::Le,
                            Sense::Eq => Sense::Eq,
                        }
                    } else {
                        row.sense
                    };
                    match sense {
                        Sense::Le => upper[j] = upper[j].min(v),
                        Sense::Ge => lower[j] = lower[j].max(v),
                        Sense::Eq => {
                            lower[j] = lower[j].max(v);
                            upper[j] = upper[j].min(v);
                        }
                    }
                    if lower[j] > upper[j] {
                        if lower[j] > upper[j] + tol * v.abs().max(1.0) {
                            return false;
                        }
                        let mid = 0.5 * (lower[j] + upper[j]);
                        lower[j] = mid;
                        upper[j] = mid;
                    }
                    *slot = None;
                    changed = true;
                }
                _ => {
                    let (lo, hi) = activity_bounds(&row.coefs, lower, upper);
                    let slack = tol * row.rhs.abs().max(1.0);
                    let (always, never) = match row.sense {
                        Sense::Le => (hi <= row.rhs, lo > row.rhs + slack),
                        Sense::Ge => (lo >= row.rhs, hi < row.rhs - slack),
                        Sense::Eq => (false, lo > row.rhs + slack || hi < row.rhs - slack),
                    };
                    if never {
                        return false;
                    }
                    if always {
                        *slot = None;
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            return true;
        }
    }
}

fn activity_bounds(coefs: &[(usize, f64)], lower: &[f64], upper: &[f64]) -> (f64, f64) {
    let mut lo = 0.0;
    let mut hi = 0.0;
    for &(j, a) in coefs {
        if a > 0.0 {
            lo += a * lower[j];
            hi += a * upper[j];
        } else {
            lo += a * upper[j];
            hi += a * lower[j];
        }
    }
    (if lo.is_nan() { f64::NEG_INFINITY } else { lo }, if hi.is_nan() { f64::INFINITY } else { hi })
}

enum Phase {
    Optimal(Vec<f64>),
    Infeasible,
    Unbounded,
    Limit,
}

struct Tableau {
    /// `m` rows of `width + 1` entries; the last entry is the right-hand side.
    t: Vec<f64>,
    m: usize,
    width: usize,
    basis: Vec<usize>,
    obj: Vec<f64>,
}

impl Tableau {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * (self.width + 1) + j]
    }

    fn rhs(&self, i: usize) -> f64 {
        self.t[i * (self.width + 1) + self.width]
    }

    fn pivot(&mut self, r: usize, e: usize) {
        let w = self.width + 1;
        let p = self.t[r * w + e];
        for j in 0..w {
            self.t[r * w + j] /= p;
        }
        let pivot_row: Vec<f64> = self.t[r * w..(r + 1) * w].to_vec();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.t[i * w + e];
            if f != 0.0 {
                let row = &mut self.t[i * w..(i + 1) * w];
                for (x, &pv) in row.iter_mut().zip(&pivot_row) {
                    *x -= f * pv;
                }
                row[e] = 0.0;
            }
        }
        let f = self.obj[e];
        if f != 0.0 {
            for (x, &pv) in self.obj.iter_mut().zip(&pivot_row) {
                *x -= f * pv;
            }
            self.obj[e] = 0.0;
        }
        self.basis[r] = e;
    }

    /// Resets the reduced-cost row for column costs `cost` (length `width`).
    fn price(&mut self, cost: &[f64]) {
        let w = self.width + 1;
        self.obj = cost.to_vec();
        self.obj.push(0.0);
        for i in 0..self.m {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                for j in 0..w {
                    self.obj[j] -= cb * self.t[i * w + j];
                }
            }
        }
    }

    /// Bland's rule iterations. `allowed[j]` marks columns that may enter.
    fn iterate(&mut self, allowed: &[bool], opts: &SimplexOptions, iterations: &mut usize) -> Option<bool> {
        let tol = opts.tol;
        loop {
            if *iterations >= opts.max_iterations {
                return None;
            }
            let Some(e) = (0..self.width).find(|&j| allowed[j] && self.obj[j] < -tol) else {
                return Some(true);
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let a = self.at(i, e);
                if a > tol {
                    let ratio = self.rhs(i) / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((r, best)) => {
                            if ratio < best - tol || (ratio <= best + tol && self.basis[i] < self.basis[r]) {
                                Some((i, ratio))
                            } else {
                                Some((r, best))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = leave else {
                return Some(false);
            };
            self.pivot(r, e);
            *iterations += 1;
        }
    }
}

fn run_two_phase(rows: Vec<(Vec<f64>, Sense, f64)>, cost: &[f64], opts: &SimplexOptions) -> Result<Phase, MipError> {
    let n = cost.len();
    let m = rows.len();
    if m == 0 {
        // Only nonnegativity: optimal at zero unless a cost is negative.
        if cost.iter().any(|&c| c < -opts.tol) {
            return Ok(Phase::Unbounded);
        }
        return Ok(Phase::Optimal(vec![0.0; n]));
    }
    // Normalize to nonnegative right-hand sides.
    let rows: Vec<(Vec<f64>, Sense, f64)> = rows
        .into_iter()
        .map(|(a, s, b)| {
            if b < 0.0 {
                let flipped = match s {
                    Sense::Le => Sense::Ge,
                    Sense::Ge => Sense::Le,
                    Sense::Eq => Sense::Eq,
                };
                (a.into_iter().map(|x| -x).collect(), flipped, -b)
            } else {
                (a, s, b)
            }
        })
        .collect();
    let n_slack = rows.iter().filter(|r| r.1 != Sense::Eq).count();
    let n_art = rows.iter().filter(|r| r.1 != Sense::Le).count();
    let width = n + n_slack + n_art;
    let w = width + 1;
    let mut t = vec![0.0; m * w];
    let mut basis = vec![0; m];
    let mut is_art = vec![false; width];
    let (mut s_idx, mut a_idx) = (n, n + n_slack);
    let max_rhs = rows.iter().map(|r| r.2).fold(1.0f64, f64::max);
    for (i, (a, sense, b)) in rows.iter().enumerate() {
        t[i * w..i * w + n].copy_from_slice(a);
        t[i * w + width] = *b;
        match sense {
            Sense::Le => {
                t[i * w + s_idx] = 1.0;
                basis[i] = s_idx;
                s_idx += 1;
            }
            Sense::Ge => {
                t[i * w + s_idx] = -1.0;
                s_idx += 1;
                t[i * w + a_idx] = 1.0;
                is_art[a_idx] = true;
                basis[i] = a_idx;
                a_idx += 1;
            }
            Sense::Eq => {
                t[i * w + a_idx] = 1.0;
                is_art[a_idx] = true;
                basis[i] = a_idx;
                a_idx += 1;
            }
        }
    }
    let mut tab = Tableau { t, m, width, basis, obj: Vec::new() };
    let mut iterations = 0;

    if n_art > 0 {
        let phase1: Vec<f64> = (0..width).map(|j| if is_art[j] { 1.0 } else { 0.0 }).collect();
        tab.price(&phase1);
        let allowed = vec![true; width];
        if tab.iterate(&allowed, opts, &mut iterations).is_none() {
            return Ok(Phase::Limit);
        }
        let infeas: f64 = (0..m).filter(|&i| is_art[tab.basis[i]]).map(|i| tab.rhs(i)).sum();
        if infeas > opts.tol * max_rhs {
            return Ok(Phase::Infeasible);
        }
        // Drive remaining (zero-valued) artificials out of the basis where possible.
        for i in 0..m {
            if is_art[tab.basis[i]] {
                if let Some(j) = (0..width).find(|&j| !is_art[j] && tab.at(i, j).abs() > opts.tol) {
                    tab.pivot(i, j);
                }
            }
        }
    }

    let mut phase2 = vec![0.0; width];
    phase2[..n].copy_from_slice(cost);
    tab.price(&phase2);
    let allowed: Vec<bool> = (0..width).map(|j| !is_art[j]).collect();
    match tab.iterate(&allowed, opts, &mut iterations) {
        None => Ok(Phase::Limit),
        Some(false) => Ok(Phase::Unbounded),
        Some(true) => {
            let mut y = vec![0.0; n];
            for i in 0..m {
                let b = tab.basis[i];
                if b < n {
                    y[b] = tab.rhs(i).max(0.0);
                }
            }
            Ok(Phase::Optimal(y))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Expr;

    #[test]
    fn single_bounded_variable() {
        let mut m = MipModel::new("t", ObjectiveSense::Maximize);
        let x = m.add_continuous("x", 0.0, f64::INFINITY).unwrap();
        m.add_constraint("c", Expr::var(x), Sense::Le, 3.0);
        m.set_objective(ObjectiveSense::Maximize, Expr::var(x));
        let s = simplex_solve(&m).unwrap();
        assert_eq!(s.status, Status::Optimal);
        assert!((s.value(x) - 3.0).abs() < 1e-12);
        assert!((s.objective - 3.0).abs() < 1e-12);
    }

    #[test]
    fn contradictory_bounds_are_infeasible() {
        let mut m = MipModel::new("t", ObjectiveSense::Maximize);
        let x = m.add_continuous("x", 0.0, f64::INFINITY).unwrap();
        m.add_constraint("a", Expr::var(x), Sense::Le, 1.0);
        m.add_constraint("b", Expr::var(x), Sense::Ge, 2.0);
        m.set_objective(ObjectiveSense::Maximize, Expr::var(x));
        assert_eq!(simplex_solve(&m).unwrap().status, Status::Infeasible);
    }

    #[test]
    fn unbounded_ray() {
        let mut m = MipModel::new("t", ObjectiveSense::Maximize);
        let x = m.add_continuous("x", 0.0, f64::INFINITY).unwrap();
        let y = m.add_continuous("y", 0.0, f64::INFINITY).unwrap();
        m.add_constraint("c", Expr::var(x).with_term(y, -1.0), Sense::Le, 1.0);
        m.set_objective(ObjectiveSense::Maximize, Expr::var(x));
        assert_eq!(simplex_solve(&m).unwrap().status, Status::Unbounded);
    }

    #[test]
    fn free_and_negative_bounds() {
        // min x + y, x free, y in [-5, -1], x - y >= 2  ->  y = -5, x = -3.
        let mut m = MipModel::new("t", ObjectiveSense::Minimize);
        let x = m.add_continuous("x", f64::NEG_INFINITY, f64::INFINITY).unwrap();
        let y = m.add_continuous("y", -5.0, -1.0).unwrap();
        m.add_constraint("c", Expr::var(x).with_term(y, -1.0), Sense::Ge, 2.0);
        m.set_objective(ObjectiveSense::Minimize, Expr::var(x).with_term(y, 1.0));
        let s = simplex_solve(&m).unwrap();
        assert_eq!(s.status, Status::Optimal);
        assert!((s.objective + 8.0).abs() < 1e-9, "{}", s.objective);
    }

    #[test]
    fn degenerate_equalities_and_redundant_rows() {
        // x + y = 1 twice, x - y = 0: unique point (0.5, 0.5).
        let mut m = MipModel::new("t", ObjectiveSense::Maximize);
        let x = m.add_continuous("x", 0.0, 10.0).unwrap();
        let y = m.add_continuous("y", 0.0, 10.0).unwrap();
        m.add_constraint("a", Expr::var(x).with_term(y, 1.0), Sense::Eq, 1.0);
        m.add_constraint("b", Expr::var(x).with_term(y, 1.0), Sense::Eq, 1.0);
        m.add_constraint("c", Expr::var(x).with_term(y, -1.0), Sense::Eq, 0.0);
        m.set_objective(ObjectiveSense::Maximize, Expr::var(x));
        let s = simplex_solve(&m).unwrap();
        assert_eq!(s.status, Status::Optimal);
        assert!((s.value(x) - 0.5).abs() < 1e-9);
        assert!((s.value(y) - 0.5).abs() < 1e-9);
    }

    #[test]
    fn rejects_binaries() {
        let mut m = MipModel::new("t", ObjectiveSense::Maximize);
        m.add_binary("b").unwrap();
        assert!(matches!(simplex_solve(&m), Err(MipError::NotContinuous(_))));
    }

    #[test]
    fn size_guard() {
        let mut m = MipModel::new("t", ObjectiveSense::Maximize);
        let a = m.add_continuous("a", 0.0, f64::INFINITY).unwrap();
        let b = m.add_continuous("b", 0.0, f64::INFINITY).unwrap();
        for i in 0..5 {
            m.add_constraint(format!("r{i}"), Expr::var(a).with_term(b, i as f64 + 1.0), Sense::Le, 10.0);
        }
        let opts = SimplexOptions { max_rows: 3, ..SimplexOptions::default() };
        assert!(matches!(simplex_solve_with(&m, &opts), Err(MipError::SizeLimit { .. })));
    }
}
