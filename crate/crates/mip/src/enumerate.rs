//! Exact solve by depth-first enumeration of the free binaries.
//!
//! Every node keeps interval bounds on each row activity and on the objective,
//! so infeasible or dominated subtrees are cut without solving an LP. At a leaf
//! all binaries are fixed, every product collapses to a linear term and the
//! remaining continuous problem goes to the simplex.

use crate::model::{MipModel, ObjectiveSense, Sense, Solution, Status, VarKind};
use crate::simplex::{LinearProgram, LpOutcome, LpRow, SimplexOptions};
use crate::MipError;

/// Default cap on free binaries accepted by [`enumerate_binaries_solve`].
pub const DEFAULT_MAX_BINARIES: usize = 24;

const PRUNE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EnumerationStats {
    pub nodes: usize,
    pub leaves: usize,
    pub lp_solves: usize,
}

pub fn enumerate_binaries_solve(model: &MipModel, max_binaries: usize) -> Result<Solution, MipError> {
    enumerate_binaries_solve_with_stats(model, max_binaries).map(|(s, _)| s)
}

pub fn enumerate_binaries_solve_with_stats(
    model: &MipModel,
    max_binaries: usize,
) -> Result<(Solution, EnumerationStats), MipError> {
    model.validate()?;
    let search = Search::build(model)?;
    if search.free.len() > max_binaries {
        return Err(MipError::TooManyBinaries { count: search.free.len(), max: max_binaries });
    }
    search.run()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BinState {
    Free,
    Zero,
    One,
}

#[derive(Debug, Clone, Copy)]
enum Term {
    /// `coef * b`
    Bin { b: usize, coef: f64 },
    /// `coef * b * x` with `x` continuous
    Gated { b: usize, x: usize, coef: f64 },
    /// `coef * a * b`
    BinBin { a: usize, b: usize, coef: f64 },
}

/// Interval sum that tracks infinite endpoints by count so it can be updated
/// by subtraction.
#[derive(Debug, Clone, Copy, Default)]
struct Activity {
    lo: f64,
    lo_inf: u32,
    hi: f64,
    hi_inf: u32,
}

impl Activity {
    fn shift(&mut self, (lo, hi): (f64, f64), sign: f64) {
        let step = |acc: &mut f64, cnt: &mut u32, v: f64| {
            if v.is_infinite() {
                if sign > 0.0 {
                    *cnt += 1;
                } else {
                    *cnt -= 1;
                }
            } else {
                *acc += sign * v;
            }
        };
        step(&mut self.lo, &mut self.lo_inf, lo);
        step(&mut self.hi, &mut self.hi_inf, hi);
    }

    fn lower(&self) -> f64 {
        if self.lo_inf > 0 {
            f64::NEG_INFINITY
        } else {
            self.lo
        }
    }

    fn upper(&self) -> f64 {
        if self.hi_inf > 0 {
            f64::INFINITY
        } else {
            self.hi
        }
    }
}

fn scaled(coef: f64, lo: f64, hi: f64) -> (f64, f64) {
    let mul = |v: f64| if v == 0.0 || coef == 0.0 { 0.0 } else { coef * v };
    let (a, b) = (mul(lo), mul(hi));
    (a.min(b), a.max(b))
}

fn hull_with_zero((lo, hi): (f64, f64)) -> (f64, f64) {
    (lo.min(0.0), hi.max(0.0))
}

struct Row {
    /// Continuous linear part, indexed by model variable.
    linear: Vec<(usize, f64)>,
    dynamic: Vec<Term>,
    sense: Sense,
    rhs: f64,
}

struct Search<'a> {
    model: &'a MipModel,
    /// Last entry is the objective, oriented for maximization.
    rows: Vec<Row>,
    free: Vec<usize>,
    /// Per binary variable: (row, dynamic term index).
    occurrences: Vec<Vec<(usize, usize)>>,
    continuous: Vec<usize>,
    orientation: f64,
}

struct State {
    bins: Vec<BinState>,
    activity: Vec<Activity>,
    undo: Vec<(usize, Activity)>,
    best: Option<(f64, Vec<f64>)>,
    stats: EnumerationStats,
    abort: Option<Status>,
}

impl<'a> Search<'a> {
    fn build(model: &'a MipModel) -> Result<Self, MipError> {
        let is_bin = |v: usize| model.vars[v].kind == VarKind::Binary;
        let orientation = match model.sense {
            ObjectiveSense::Maximize => 1.0,
            ObjectiveSense::Minimize => -1.0,
        };
        let mut rows = Vec::with_capacity(model.constraints.len() + 1);
        let exprs = model
            .constraints
            .iter()
            .map(|c| (&c.expr, 1.0, c.sense, c.rhs))
            .chain(std::iter::once((&model.objective, orientation, Sense::Le, f64::INFINITY)));
        for (expr, scale, sense, rhs) in exprs {
            let mut row = Row { linear: Vec::new(), dynamic: Vec::new(), sense, rhs };
            for &(v, c) in &expr.terms {
                let c = c * scale;
                if is_bin(v.0) {
                    row.dynamic.push(Term::Bin { b: v.0, coef: c });
                } else {
                    row.linear.push((v.0, c));
                }
            }
            for &(a, b, c) in &expr.products {
                let c = c * scale;
                let term = match (is_bin(a.0), is_bin(b.0)) {
                    (true, true) if a == b => Term::Bin { b: a.0, coef: c },
                    (true, true) => Term::BinBin { a: a.0, b: b.0, coef: c },
                    (true, false) => Term::Gated { b: a.0, x: b.0, coef: c },
                    (false, true) => Term::Gated { b: b.0, x: a.0, coef: c },
                    (false, false) => {
                        return Err(MipError::NonLinear(format!(
                            "product of continuous variables {} and {}",
                            model.vars[a.0].name, model.vars[b.0].name
                        )))
                    }
                };
                row.dynamic.push(term);
            }
            rows.push(row);
        }
        let n = model.num_vars();
        let mut occurrences = vec![Vec::new(); n];
        for (r, row) in rows.iter().enumerate() {
            for (ti, t) in row.dynamic.iter().enumerate() {
                match *t {
                    Term::Bin { b, .. } | Term::Gated { b, .. } => occurrences[b].push((r, ti)),
                    Term::BinBin { a, b, .. } => {
                        occurrences[a].push((r, ti));
                        occurrences[b].push((r, ti));
                    }
                }
            }
        }
        let free = (0..n)
            .filter(|&v| is_bin(v) && model.vars[v].lower < 0.5 && model.vars[v].upper > 0.5)
            .collect();
        let continuous = (0..n).filter(|&v| !is_bin(v)).collect();
        Ok(Search { model, rows, free, occurrences, continuous, orientation })
    }

    fn contribution(&self, term: &Term, bins: &[BinState]) -> (f64, f64) {
        let vars = &self.model.vars;
        match *term {
            Term::Bin { b, coef } => match bins[b] {
                BinState::Zero => (0.0, 0.0),
                BinState::One => (coef, coef),
                BinState::Free => hull_with_zero((coef, coef)),
            },
            Term::Gated { b, x, coef } => {
                let range = scaled(coef, vars[x].lower, vars[x].upper);
                match bins[b] {
                    BinState::Zero => (0.0, 0.0),
                    BinState::One => range,
                    BinState::Free => hull_with_zero(range),
                }
            }
            Term::BinBin { a, b, coef } => match (bins[a], bins[b]) {
                (BinState::Zero, _) | (_, BinState::Zero) => (0.0, 0.0),
                (BinState::One, BinState::One) => (coef, coef),
                _ => hull_with_zero((coef, coef)),
            },
        }
    }

    fn row_feasible(&self, r: usize, act: &Activity) -> bool {
        let row = &self.rows[r];
        if r == self.rows.len() - 1 {
            return true;
        }
        let slack = PRUNE_TOL * row.rhs.abs().max(1.0);
        match row.sense {
            Sense::Le => act.lower() <= row.rhs + slack,
            Sense::Ge => act.upper() >= row.rhs - slack,
            Sense::Eq => act.lower() <= row.rhs + slack && act.upper() >= row.rhs - slack,
        }
    }

    fn bound_improves(&self, state: &State) -> bool {
        match &state.best {
            None => true,
            Some((best, _)) => {
                let obj = state.activity[self.rows.len() - 1];
                let bound = self.orientation * self.model.objective.constant + obj.upper();
                bound > best + PRUNE_TOL * best.abs().max(1.0)
            }
        }
    }

    fn run(&self) -> Result<(Solution, EnumerationStats), MipError> {
        let vars = &self.model.vars;
        let bins: Vec<BinState> = vars
            .iter()
            .map(|v| {
                if v.kind != VarKind::Binary {
                    BinState::Free
                } else if v.lower > 0.5 {
                    BinState::One
                } else if v.upper < 0.5 {
                    BinState::Zero
                } else {
                    BinState::Free
                }
            })
            .collect();
        let mut activity = Vec::with_capacity(self.rows.len());
        for row in &self.rows {
            let mut act = Activity::default();
            for &(v, c) in &row.linear {
                act.shift(scaled(c, vars[v].lower, vars[v].upper), 1.0);
            }
            for t in &row.dynamic {
                act.shift(self.contribution(t, &bins), 1.0);
            }
            activity.push(act);
        }
        let mut state =
            State { bins, activity, undo: Vec::new(), best: None, stats: EnumerationStats::default(), abort: None };
        let root_ok = (0..self.rows.len()).all(|r| self.row_feasible(r, &state.activity[r]));
        if root_ok {
            self.descend(0, &mut state)?;
        }
        let stats = state.stats;
        if let Some(status) = state.abort {
            return Ok((Solution::without_point(status), stats));
        }
        Ok(match state.best {
            Some((_, values)) => {
                (Solution { status: Status::Optimal, objective: self.model.objective.eval(&values), values }, stats)
            }
            None => (Solution::without_point(Status::Infeasible), stats),
        })
    }

    fn descend(&self, depth: usize, state: &mut State) -> Result<(), MipError> {
        state.stats.nodes += 1;
        if state.abort.is_some() || !self.bound_improves(state) {
            return Ok(());
        }
        if depth == self.free.len() {
            return self.solve_leaf(state);
        }
        let b = self.free[depth];
        for value in [BinState::Zero, BinState::One] {
            let mark = state.undo.len();
            let mut feasible = true;
            let olds: Vec<(usize, (f64, f64))> = self.occurrences[b]
                .iter()
                .map(|&(r, ti)| (r, self.contribution(&self.rows[r].dynamic[ti], &state.bins)))
                .collect();
            state.bins[b] = value;
            for (&(r, ti), &(_, old)) in self.occurrences[b].iter().zip(&olds) {
                let new = self.contribution(&self.rows[r].dynamic[ti], &state.bins);
                state.undo.push((r, state.activity[r]));
                state.activity[r].shift(old, -1.0);
                state.activity[r].shift(new, 1.0);
            }
            for &(r, _) in &self.occurrences[b] {
                if !self.row_feasible(r, &state.activity[r]) {
                    feasible = false;
                    break;
                }
            }
            if feasible {
                self.descend(depth + 1, state)?;
            }
            while state.undo.len() > mark {
                let (r, act) = state.undo.pop().expect("undo entry");
                state.activity[r] = act;
            }
            state.bins[b] = BinState::Free;
        }
        Ok(())
    }

    fn solve_leaf(&self, state: &mut State) -> Result<(), MipError> {
        state.stats.leaves += 1;
        let vars = &self.model.vars;
        let mut lp_index = vec![usize::MAX; vars.len()];
        for (i, &v) in self.continuous.iter().enumerate() {
            lp_index[v] = i;
        }
        let bin_value = |b: usize| if state.bins[b] == BinState::One { 1.0 } else { 0.0 };
        let mut rows = Vec::with_capacity(self.rows.len() - 1);
        let mut cost = vec![0.0; self.continuous.len()];
        let mut obj_const = self.orientation * self.model.objective.constant;
        let last = self.rows.len() - 1;
        for (r, row) in self.rows.iter().enumerate() {
            let mut coefs: Vec<(usize, f64)> = row.linear.iter().map(|&(v, c)| (lp_index[v], c)).collect();
            let mut fixed = 0.0;
            for t in &row.dynamic {
                match *t {
                    Term::Bin { b, coef } => fixed += coef * bin_value(b),
                    Term::BinBin { a, b, coef } => fixed += coef * bin_value(a) * bin_value(b),
                    Term::Gated { b, x, coef } => {
                        if bin_value(b) > 0.5 {
                            coefs.push((lp_index[x], coef));
                        }
                    }
                }
            }
            if r == last {
                obj_const += fixed;
                for (i, c) in coefs {
                    cost[i] -= c;
                }
            } else {
                rows.push(LpRow { coefs, sense: row.sense, rhs: row.rhs - fixed });
            }
        }
        let lp = LinearProgram {
            lower: self.continuous.iter().map(|&v| vars[v].lower).collect(),
            upper: self.continuous.iter().map(|&v| vars[v].upper).collect(),
            rows,
            cost,
        };
        state.stats.lp_solves += 1;
        match lp.solve(&SimplexOptions::default())? {
            LpOutcome::Infeasible => {}
            LpOutcome::Unbounded => state.abort = Some(Status::Unbounded),
            LpOutcome::IterationLimit => state.abort = Some(Status::Limit),
            LpOutcome::Optimal(x) => {
                let mut values: Vec<f64> = (0..vars.len())
                    .map(|v| if vars[v].kind == VarKind::Binary { bin_value(v) } else { 0.0 })
                    .collect();
                for (i, &v) in self.continuous.iter().enumerate() {
                    values[v] = x[i];
                }
                let objective = obj_const - lp.cost.iter().zip(&x).map(|(c, v)| c * v).sum::<f64>();
                let better = match &state.best {
                    None => true,
                    Some((best, _)) => objective > best + PRUNE_TOL * best.abs().max(1.0),
                };
                if better {
                    state.best = Some((objective, values));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Expr;

    #[test]
    fn knapsack_matches_brute_force() {
        let weights = [3.0, 4.0, 5.0, 2.0, 7.0];
        let values = [4.0, 5.0, 7.0, 3.0, 9.0];
        let cap = 11.0;
        let mut m = MipModel::new("knap", ObjectiveSense::Maximize);
        let xs: Vec<_> = (0..5).map(|i| m.add_binary(format!("x{i}")).unwrap()).collect();
        let mut w = Expr::new();
        let mut obj = Expr::new();
        for i in 0..5 {
            w.add_term(xs[i], weights[i]);
            obj.add_term(xs[i], values[i]);
        }
        m.add_constraint("cap", w, Sense::Le, cap);
        m.set_objective(ObjectiveSense::Maximize, obj);
        let s = enumerate_binaries_solve(&m, 24).unwrap();
        let mut best = 0.0f64;
        for mask in 0u32..32 {
            let (mut tw, mut tv) = (0.0, 0.0);
            for i in 0..5 {
                if mask >> i & 1 == 1 {
                    tw += weights[i];
                    tv += values[i];
                }
            }
            if tw <= cap {
                best = best.max(tv);
            }
        }
        assert_eq!(s.status, Status::Optimal);
        assert!((s.objective - best).abs() < 1e-9);
        assert!(m.max_violation(&s.values) < 1e-9);
    }

    #[test]
    fn gated_product_uses_continuous_factor() {
        // max 2*b*x - b with x in [0, 3] and x <= 2: choose b = 1, x = 2.
        let mut m = MipModel::new("gated", ObjectiveSense::Maximize);
        let b = m.add_binary("b").unwrap();
        let x = m.add_continuous("x", 0.0, 3.0).unwrap();
        m.add_constraint("c", Expr::var(x), Sense::Le, 2.0);
        m.set_objective(ObjectiveSense::Maximize, Expr::new().with_product(b, x, 2.0).with_term(b, -1.0));
        let s = enumerate_binaries_solve(&m, 24).unwrap();
        assert!((s.objective - 3.0).abs() < 1e-9);
        assert_eq!(s.value(b), 1.0);
    }

    #[test]
    fn rejects_continuous_products_and_large_models() {
        let mut m = MipModel::new("bad", ObjectiveSense::Maximize);
        let x = m.add_continuous("x", 0.0, 1.0).unwrap();
        let y = m.add_continuous("y", 0.0, 1.0).unwrap();
        m.set_objective(ObjectiveSense::Maximize, Expr::new().with_product(x, y, 1.0));
        assert!(matches!(enumerate_binaries_solve(&m, 24), Err(MipError::NonLinear(_))));

        let mut big = MipModel::new("big", ObjectiveSense::Maximize);
        for i in 0..5 {
            big.add_binary(format!("b{i}")).unwrap();
        }
        assert!(matches!(
            enumerate_binaries_solve(&big, 4),
            Err(MipError::TooManyBinaries { count: 5, max: 4 })
        ));
    }

    #[test]
    fn fixed_binaries_are_not_enumerated() {
        let mut m = MipModel::new("fixed", ObjectiveSense::Minimize);
        let a = m.add_binary("a").unwrap();
        let b = m.add_binary("b").unwrap();
        m.var_mut(a).lower = 1.0;
        m.add_constraint("c", Expr::var(a).with_term(b, 1.0), Sense::Ge, 1.0);
        m.set_objective(ObjectiveSense::Minimize, Expr::var(a).with_term(b, 1.0));
        let (s, stats) = enumerate_binaries_solve_with_stats(&m, 1).unwrap();
        assert!((s.objective - 1.0).abs() < 1e-12);
        assert_eq!(s.value(a), 1.0);
        assert!(stats.leaves <= 2);
    }

    #[test]
    fn infeasible_model() {
        let mut m = MipModel::new("inf", ObjectiveSense::Maximize);
        let a = m.add_binary("a").unwrap();
        let b = m.add_binary("b").unwrap();
        m.add_constraint("c", Expr::var(a).with_term(b, 1.0), Sense::Ge, 3.0);
        assert_eq!(enumerate_binaries_solve(&m, 24).unwrap().status, Status::Infeasible);
    }
}
