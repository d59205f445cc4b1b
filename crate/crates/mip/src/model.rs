//! Solver-agnostic linear (and binary-bilinear) model representation.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::MipError;

/// Index of a variable inside a [`MipModel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub kind: VarKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

impl Sense {
    pub fn symbol(self) -> &'static str {
        match self {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        }
    }

    /// Whether `lhs sense rhs` holds with absolute slack `tol`.
    pub fn holds(self, lhs: f64, rhs: f64, tol: f64) -> bool {
        match self {
            Sense::Le => lhs <= rhs + tol,
            Sense::Ge => lhs >= rhs - tol,
            Sense::Eq => (lhs - rhs).abs() <= tol,
        }
    }

    /// Amount by which `lhs sense rhs` is violated (0 when satisfied).
    pub fn violation(self, lhs: f64, rhs: f64) -> f64 {
        match self {
            Sense::Le => (lhs - rhs).max(0.0),
            Sense::Ge => (rhs - lhs).max(0.0),
            Sense::Eq => (lhs - rhs).abs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObjectiveSense {
    Maximize,
    Minimize,
}

/// A linear expression with optional products of two variables.
///
/// Products are only meaningful when at least one factor is binary; see
/// `linearize` in the joint-prompting crate and [`crate::enumerate_binaries_solve`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Expr {
    pub terms: Vec<(VarId, f64)>,
    pub products: Vec<(VarId, VarId, f64)>,
    pub constant: f64,
}

impl Expr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn constant(value: f64) -> Self {
        Expr { constant: value, ..Self::default() }
    }

    pub fn var(v: VarId) -> Self {
        Expr { terms: vec![(v, 1.0)], ..Self::default() }
    }

    pub fn add_term(&mut self, v: VarId, coef: f64) -> &mut Self {
        self.terms.push((v, coef));
        self
    }

    pub fn add_product(&mut self, a: VarId, b: VarId, coef: f64) -> &mut Self {
        self.products.push((a, b, coef));
        self
    }

    pub fn add_constant(&mut self, c: f64) -> &mut Self {
        self.constant += c;
        self
    }

    pub fn with_term(mut self, v: VarId, coef: f64) -> Self {
        self.terms.push((v, coef));
        self
    }

    pub fn with_product(mut self, a: VarId, b: VarId, coef: f64) -> Self {
        self.products.push((a, b, coef));
        self
    }

    pub fn with_constant(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn is_linear(&self) -> bool {
        self.products.is_empty()
    }

    pub fn eval(&self, values: &[f64]) -> f64 {
        let lin: f64 = self.terms.iter().map(|&(v, c)| c * values[v.0]).sum();
        let quad: f64 = self.products.iter().map(|&(a, b, c)| c * values[a.0] * values[b.0]).sum();
        self.constant + lin + quad
    }

    pub fn vars(&self) -> impl Iterator<Item = VarId> + '_ {
        self.terms
            .iter()
            .map(|&(v, _)| v)
            .chain(self.products.iter().flat_map(|&(a, b, _)| [a, b]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub name: String,
    pub expr: Expr,
    pub sense: Sense,
    pub rhs: f64,
}

impl Constraint {
    pub fn violation(&self, values: &[f64]) -> f64 {
        self.sense.violation(self.expr.eval(values), self.rhs)
    }
}

/// Variables, constraints and an objective. Names are unique.
#[derive(Debug, Clone, PartialEq)]
pub struct MipModel {
    pub name: String,
    pub vars: Vec<Variable>,
    pub constraints: Vec<Constraint>,
    pub objective: Expr,
    pub sense: ObjectiveSense,
    pub metadata: BTreeMap<String, String>,
    index: HashMap<String, VarId>,
}

impl MipModel {
    pub fn new(name: impl Into<String>, sense: ObjectiveSense) -> Self {
        MipModel {
            name: name.into(),
            vars: Vec::new(),
            constraints: Vec::new(),
            objective: Expr::new(),
            sense,
            metadata: BTreeMap::new(),
            index: HashMap::new(),
        }
    }

    fn push_var(&mut self, var: Variable) -> Result<VarId, MipError> {
        if self.index.contains_key(&var.name) {
            return Err(MipError::DuplicateName(var.name));
        }
        if var.lower.is_nan() || var.upper.is_nan() {
            return Err(MipError::InvalidBounds { name: var.name, lower: var.lower, upper: var.upper });
        }
        if var.kind == VarKind::Binary && (var.lower < 0.0 || var.upper > 1.0) {
            return Err(MipError::InvalidBounds { name: var.name, lower: var.lower, upper: var.upper });
        }
        let id = VarId(self.vars.len());
        self.index.insert(var.name.clone(), id);
        self.vars.push(var);
        Ok(id)
    }

    pub fn add_continuous(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> Result<VarId, MipError> {
        self.push_var(Variable { name: name.into(), lower, upper, kind: VarKind::Continuous })
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> Result<VarId, MipError> {
        self.push_var(Variable { name: name.into(), lower: 0.0, upper: 1.0, kind: VarKind::Binary })
    }

    pub fn add_var(&mut self, var: Variable) -> Result<VarId, MipError> {
        self.push_var(var)
    }

    /// Adds `expr sense rhs`; a constant inside `expr` is moved to the right-hand side.
    pub fn add_constraint(&mut self, name: impl Into<String>, mut expr: Expr, sense: Sense, rhs: f64) -> usize {
        let rhs = rhs - expr.constant;
        expr.constant = 0.0;
        self.constraints.push(Constraint { name: name.into(), expr, sense, rhs });
        self.constraints.len() - 1
    }

    pub fn set_objective(&mut self, sense: ObjectiveSense, expr: Expr) {
        self.sense = sense;
        self.objective = expr;
    }

    pub fn var_id(&self, name: &str) -> Option<VarId> {
        self.index.get(name).copied()
    }

    pub fn var(&self, id: VarId) -> &Variable {
        &self.vars[id.0]
    }

    pub fn var_mut(&mut self, id: VarId) -> &mut Variable {
        &mut self.vars[id.0]
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_binaries(&self) -> usize {
        self.vars.iter().filter(|v| v.kind == VarKind::Binary).count()
    }

    /// Binaries whose bounds still leave both values open.
    pub fn num_free_binaries(&self) -> usize {
        self.vars.iter().filter(|v| v.kind == VarKind::Binary && v.lower < 0.5 && v.upper > 0.5).count()
    }

    pub fn is_linear(&self) -> bool {
        self.objective.is_linear() && self.constraints.iter().all(|c| c.expr.is_linear())
    }

    /// Checks the structural invariants: unique names, known variable
    /// references, binary bounds inside `[0, 1]`.
    pub fn validate(&self) -> Result<(), MipError> {
        let mut seen = HashMap::new();
        for (i, v) in self.vars.iter().enumerate() {
            if seen.insert(v.name.as_str(), i).is_some() {
                return Err(MipError::DuplicateName(v.name.clone()));
            }
            if v.kind == VarKind::Binary && (v.lower < 0.0 || v.upper > 1.0) {
                return Err(MipError::InvalidBounds { name: v.name.clone(), lower: v.lower, upper: v.upper });
            }
        }
        let n = self.vars.len();
        let check = |e: &Expr, owner: &str| -> Result<(), MipError> {
            match e.vars().find(|v| v.0 >= n) {
                Some(v) => Err(MipError::UnknownVariable(format!("#{} in {owner}", v.0))),
                None => Ok(()),
            }
        };
        check(&self.objective, "objective")?;
        for c in &self.constraints {
            check(&c.expr, &c.name)?;
        }
        Ok(())
    }

    /// Largest bound, integrality or constraint violation of `values`.
    pub fn max_violation(&self, values: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (v, &x) in self.vars.iter().zip(values) {
            worst = worst.max(v.lower - x).max(x - v.upper);
            if v.kind == VarKind::Binary {
                worst = worst.max((x - x.round()).abs());
            }
        }
        for c in &self.constraints {
            worst = worst.max(c.violation(values));
        }
        worst
    }

    /// Returns the first constraint violated by more than `tol`, if any.
    pub fn first_violation(&self, values: &[f64], tol: f64) -> Option<String> {
        for (v, &x) in self.vars.iter().zip(values) {
            if x < v.lower - tol || x > v.upper + tol {
                return Some(format!("bound of {} ({x})", v.name));
            }
            if v.kind == VarKind::Binary && (x - x.round()).abs() > tol {
                return Some(format!("integrality of {} ({x})", v.name));
            }
        }
        self.constraints
            .iter()
            .find(|c| c.violation(values) > tol)
            .map(|c| format!("constraint {} (violation {})", c.name, c.violation(values)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    Limit,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Status::Optimal => "optimal",
            Status::Infeasible => "infeasible",
            Status::Unbounded => "unbounded",
            Status::Limit => "limit",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub status: Status,
    pub objective: f64,
    /// Values indexed by [`VarId`]; empty unless a point is available.
    pub values: Vec<f64>,
}

impl Solution {
    pub fn without_point(status: Status) -> Self {
        Solution { status, objective: f64::NAN, values: Vec::new() }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }

    pub fn value(&self, v: VarId) -> f64 {
        self.values[v.0]
    }

    pub fn assignment(&self, model: &MipModel) -> BTreeMap<String, f64> {
        model.vars.iter().zip(&self.values).map(|(v, &x)| (v.name.clone(), x)).collect()
    }
}
