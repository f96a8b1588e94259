//! Mixed-integer linear programs: model construction, boolean/min-max
//! linearization helpers, and solver backends.

mod bb;
pub mod external;
pub mod lp;

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use bb::solve_builtin;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarType {
    Bool,
    Int,
    Cont,
}

#[derive(Debug, Clone)]
pub struct Var {
    pub name: String,
    pub ty: VarType,
    pub lb: f64,
    pub ub: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinExpr {
    pub terms: Vec<(VarId, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        LinExpr { terms: Vec::new(), constant: c }
    }

    pub fn term(mut self, v: VarId, c: f64) -> Self {
        self.push(v, c);
        self
    }

    pub fn push(&mut self, v: VarId, c: f64) {
        if c != 0.0 {
            self.terms.push((v, c));
        }
    }

    pub fn add_expr(&mut self, other: &LinExpr, scale: f64) {
        for &(v, c) in &other.terms {
            self.push(v, c * scale);
        }
        self.constant += other.constant * scale;
    }

    pub fn sum(vars: impl IntoIterator<Item = VarId>) -> Self {
        let mut e = LinExpr::new();
        for v in vars {
            e.push(v, 1.0);
        }
        e
    }

    pub fn eval(&self, values: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(v, c)| c * values[v.0]).sum::<f64>()
    }

    /// Merges repeated variables; drops zero coefficients.
    pub(crate) fn compact(&self) -> LinExpr {
        let mut terms: Vec<(VarId, f64)> = Vec::with_capacity(self.terms.len());
        let mut sorted = self.terms.clone();
        sorted.sort_by_key(|t| t.0);
        for (v, c) in sorted {
            match terms.last_mut() {
                Some(last) if last.0 == v => last.1 += c,
                _ => terms.push((v, c)),
            }
        }
        terms.retain(|t| t.1 != 0.0);
        LinExpr { terms, constant: self.constant }
    }
}

impl From<VarId> for LinExpr {
    fn from(v: VarId) -> Self {
        LinExpr::new().term(v, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub name: String,
    pub expr: LinExpr,
    pub sense: Sense,
    pub rhs: f64,
}

impl Constraint {
    pub fn satisfied(&self, values: &[f64], tol: f64) -> bool {
        let lhs = self.expr.eval(values);
        let slack = tol * (1.0 + self.rhs.abs().max(lhs.abs()));
        match self.sense {
            Sense::Le => lhs <= self.rhs + slack,
            Sense::Ge => lhs >= self.rhs - slack,
            Sense::Eq => (lhs - self.rhs).abs() <= slack,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Model {
    pub vars: Vec<Var>,
    pub constraints: Vec<Constraint>,
    pub objective: Option<LinExpr>,
    /// Boolean groups with exactly one member set.
    pub one_hot_groups: Vec<Vec<VarId>>,
    /// Indices into `one_hot_groups` to branch on, in order.
    pub decision_groups: Vec<usize>,
}

impl Model {
    pub fn new() -> Self {
        Self::default()
    }

    fn var(&mut self, name: impl Into<String>, ty: VarType, lb: f64, ub: f64) -> VarId {
        self.vars.push(Var { name: name.into(), ty, lb, ub });
        VarId(self.vars.len() - 1)
    }

    pub fn bool_var(&mut self, name: impl Into<String>) -> VarId {
        self.var(name, VarType::Bool, 0.0, 1.0)
    }

    pub fn int_var(&mut self, name: impl Into<String>, lb: i64, ub: i64) -> VarId {
        self.var(name, VarType::Int, lb as f64, ub as f64)
    }

    pub fn cont_var(&mut self, name: impl Into<String>, lb: f64, ub: f64) -> VarId {
        self.var(name, VarType::Cont, lb, ub)
    }

    pub fn add(&mut self, name: impl Into<String>, expr: LinExpr, sense: Sense, rhs: f64) {
        let rhs = rhs - expr.constant;
        let expr = LinExpr { constant: 0.0, ..expr };
        self.constraints.push(Constraint { name: name.into(), expr, sense, rhs });
    }

    pub fn le(&mut self, name: impl Into<String>, expr: LinExpr, rhs: f64) {
        self.add(name, expr, Sense::Le, rhs)
    }

    pub fn ge(&mut self, name: impl Into<String>, expr: LinExpr, rhs: f64) {
        self.add(name, expr, Sense::Ge, rhs)
    }

    pub fn eq(&mut self, name: impl Into<String>, expr: LinExpr, rhs: f64) {
        self.add(name, expr, Sense::Eq, rhs)
    }

    /// Adds Σ vars = 1 and registers the group for group-aware bounding.
    pub fn one_hot(&mut self, name: impl Into<String>, vars: &[VarId]) -> usize {
        self.eq(name, LinExpr::sum(vars.iter().copied()), 1.0);
        self.one_hot_groups.push(vars.to_vec());
        self.one_hot_groups.len() - 1
    }

    /// A one-hot group the branch-and-bound branches on directly.
    pub fn decision(&mut self, name: impl Into<String>, vars: &[VarId]) -> usize {
        let g = self.one_hot(name, vars);
        self.decision_groups.push(g);
        g
    }

    pub fn minimize(&mut self, objective: LinExpr) {
        self.objective = Some(objective);
    }

    pub fn n_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn var_by_name(&self, name: &str) -> Option<VarId> {
        self.vars.iter().position(|v| v.name == name).map(VarId)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vars.len();
        for v in &self.vars {
            if v.lb > v.ub || v.lb.is_nan() || v.ub.is_nan() {
                return Err(Error::Model(format!("variable {} has empty domain [{}, {}]", v.name, v.lb, v.ub)));
            }
            if v.ty != VarType::Cont && (!v.lb.is_finite() || !v.ub.is_finite()) {
                return Err(Error::Model(format!("integer variable {} must be bounded", v.name)));
            }
        }
        let check = |e: &LinExpr, what: &str| -> Result<()> {
            for &(v, c) in &e.terms {
                if v.0 >= n {
                    return Err(Error::Model(format!("{what} references undeclared variable {}", v.0)));
                }
                if !c.is_finite() {
                    return Err(Error::Model(format!("{what} has non-finite coefficient {c}")));
                }
            }
            Ok(())
        };
        for c in &self.constraints {
            check(&c.expr, &c.name)?;
            if !c.rhs.is_finite() {
                return Err(Error::Model(format!("constraint {} has non-finite rhs", c.name)));
            }
        }
        match &self.objective {
            Some(o) => check(o, "objective")?,
            None => return Err(Error::Model("objective not set".into())),
        }
        for g in &self.one_hot_groups {
            if g.iter().any(|v| v.0 >= n || self.vars[v.0].ty != VarType::Bool) {
                return Err(Error::Model("one-hot group must contain declared boolean variables".into()));
            }
        }
        Ok(())
    }

    /// Checks a full assignment against bounds, integrality and constraints.
    pub fn is_feasible(&self, values: &[f64], tol: f64) -> bool {
        values.len() == self.vars.len()
            && self.vars.iter().zip(values).all(|(v, &x)| {
                x >= v.lb - tol
                    && x <= v.ub + tol
                    && (v.ty == VarType::Cont || (x - x.round()).abs() <= tol)
            })
            && self.constraints.iter().all(|c| c.satisfied(values, tol))
    }
}

// ---------------------------------------------------------------------------
// Linearization helpers

/// z = x AND y for booleans x, y.
pub fn lin_and(m: &mut Model, x: VarId, y: VarId) -> VarId {
    let z = m.bool_var(format!("and_{}_{}", x.0, y.0));
    m.le("and_x", LinExpr::from(z).term(x, -1.0), 0.0);
    m.le("and_y", LinExpr::from(z).term(y, -1.0), 0.0);
    m.ge("and_xy", LinExpr::from(z).term(x, -1.0).term(y, -1.0), -1.0);
    z
}

/// z = x XOR y for booleans x, y.
pub fn lin_xor(m: &mut Model, x: VarId, y: VarId) -> VarId {
    let z = m.bool_var(format!("xor_{}_{}", x.0, y.0));
    m.ge("xor_a", LinExpr::from(z).term(x, -1.0).term(y, 1.0), 0.0);
    m.ge("xor_b", LinExpr::from(z).term(x, 1.0).term(y, -1.0), 0.0);
    m.le("xor_c", LinExpr::from(z).term(x, -1.0).term(y, -1.0), 0.0);
    m.le("xor_d", LinExpr::from(z).term(x, 1.0).term(y, 1.0), 2.0);
    z
}

/// Σ_a c[a]·s[a] for a one-hot vector `s` (the caller owns Σ s = 1).
pub fn lin_lookup1(c: &[f64], s: &[VarId]) -> LinExpr {
    let mut e = LinExpr::new();
    for (&ca, &sa) in c.iter().zip(s) {
        e.push(sa, ca);
    }
    e
}

/// Σ_{a,b} C[a][b]·(s_a[a] AND s_b[b]). Product variables are only created
/// for nonzero entries, plus one-hot closure when the matrix is dense.
pub fn lin_lookup2(m: &mut Model, c: &[Vec<f64>], s_a: &[VarId], s_b: &[VarId]) -> LinExpr {
    let mut e = LinExpr::new();
    let mut products = Vec::new();
    for (a, row) in c.iter().enumerate() {
        for (b, &cab) in row.iter().enumerate() {
            if cab != 0.0 {
                let y = lin_and(m, s_a[a], s_b[b]);
                products.push(y);
                e.push(y, cab);
            }
        }
    }
    if products.len() == s_a.len() * s_b.len() && !products.is_empty() {
        m.one_hot("lookup2_pairs", &products);
    }
    e
}

/// Epigraph variable z ≥ every term; equals the max when minimized.
pub fn lin_max(m: &mut Model, name: &str, terms: &[LinExpr]) -> VarId {
    let z = m.cont_var(name, 0.0, f64::INFINITY);
    for (i, t) in terms.iter().enumerate() {
        let mut e = LinExpr::from(z);
        e.add_expr(t, -1.0);
        m.ge(format!("{name}_ge{i}"), e, 0.0);
    }
    z
}

pub fn minimize_max(m: &mut Model, terms: &[LinExpr]) -> VarId {
    let z = lin_max(m, "max_obj", terms);
    m.minimize(z.into());
    z
}

// ---------------------------------------------------------------------------
// Solving

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Optimal,
    Infeasible,
    /// A limit was hit; the best incumbent (if any) is returned.
    Timeout,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub status: Status,
    pub objective: f64,
    pub values: Vec<f64>,
    pub nodes: u64,
}

impl Solution {
    pub fn value(&self, v: VarId) -> f64 {
        self.values[v.0]
    }

    pub fn is_set(&self, v: VarId) -> bool {
        self.values[v.0] > 0.5
    }

    pub fn has_incumbent(&self) -> bool {
        !self.values.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub time_limit: Duration,
    pub node_limit: u64,
    /// A feasible starting point; ignored if it violates the model.
    pub hint: Option<Vec<f64>>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { time_limit: Duration::from_secs(300), node_limit: u64::MAX, hint: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Backend {
    #[default]
    Builtin,
    /// Shell command taking the LP file path as its last argument.
    External(String),
}

impl Backend {
    /// Reads `DFMAP_SOLVER`: unset or `builtin`, or `external:<command>`.
    pub fn from_env() -> Result<Backend> {
        match std::env::var("DFMAP_SOLVER") {
            Err(_) => Ok(Backend::Builtin),
            Ok(v) => Backend::parse(&v),
        }
    }

    pub fn parse(s: &str) -> Result<Backend> {
        let s = s.trim();
        if s.is_empty() || s == "builtin" {
            Ok(Backend::Builtin)
        } else if let Some(cmd) = s.strip_prefix("external:") {
            Ok(Backend::External(cmd.to_string()))
        } else {
            Err(Error::Parse { what: "DFMAP_SOLVER".into(), message: format!("expected `builtin` or `external:<cmd>`, got `{s}`") })
        }
    }
}

pub fn solve(model: &Model, backend: &Backend, opts: &SolveOptions) -> Result<Solution> {
    match backend {
        Backend::Builtin => solve_builtin(model, opts),
        Backend::External(cmd) => external::solve_external(model, cmd, opts),
    }
}
