//! Exact LP-free branch-and-bound.
//!
//! Nodes are bounded by interval propagation over the rows (with one-hot
//! groups treated as a single choice) plus an objective cutoff row that
//! tracks the incumbent. Continuous variables must appear in epigraph form:
//! after writing a row as `Σ a·x ≤ rhs`, at most one continuous variable has
//! a negative coefficient (the row's head), and heads form an acyclic
//! dependency graph. With integers fixed, the least continuous solution is
//! then optimal for an objective with nonnegative continuous coefficients,
//! so every leaf is evaluated exactly by one forward pass.

use std::collections::VecDeque;
use std::time::Instant;

use super::{Model, SolveOptions, Solution, Status, VarType};
use crate::error::{Error, Result};

const FEAS_TOL: f64 = 1e-9;
/// Relative improvement a new incumbent must make over the old one.
const CUTOFF_REL: f64 = 1e-11;

#[derive(Debug, Clone)]
struct GroupSeg {
    group: usize,
    /// Coefficient of each group member in this row (0 when absent).
    coefs: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Row {
    singles: Vec<(usize, f64)>,
    groups: Vec<GroupSeg>,
    rhs: f64,
}

struct Prepared {
    rows: Vec<Row>,
    var_rows: Vec<Vec<usize>>,
    groups: Vec<Vec<usize>>,
    decision_groups: Vec<usize>,
    is_int: Vec<bool>,
    /// Continuous variables in dependency order with their head rows.
    cont_order: Vec<usize>,
    head_rows: Vec<Vec<usize>>,
    obj: Vec<(usize, f64)>,
    obj_const: f64,
}

fn prepare(model: &Model) -> Result<Prepared> {
    model.validate()?;
    let n = model.vars.len();
    let is_int: Vec<bool> = model.vars.iter().map(|v| v.ty != VarType::Cont).collect();

    let mut group_of = vec![usize::MAX; n];
    for (g, members) in model.one_hot_groups.iter().enumerate() {
        for v in members {
            if group_of[v.0] == usize::MAX {
                group_of[v.0] = g;
            }
        }
    }
    let groups: Vec<Vec<usize>> = model.one_hot_groups.iter().map(|g| g.iter().map(|v| v.0).collect()).collect();

    let objective = model.objective.as_ref().expect("validated").compact();
    let obj: Vec<(usize, f64)> = objective.terms.iter().map(|&(v, c)| (v.0, c)).collect();
    for &(v, c) in &obj {
        if !is_int[v] && c < 0.0 {
            return Err(Error::Model(format!(
                "builtin solver needs nonnegative objective coefficients on continuous variables ({})",
                model.vars[v].name
            )));
        }
    }

    // Row 0 is the objective cutoff; its rhs tracks the incumbent.
    let mut raw: Vec<(Vec<(usize, f64)>, f64, String)> = vec![(obj.clone(), f64::INFINITY, "objective".into())];
    for c in &model.constraints {
        let e = c.expr.compact();
        let terms: Vec<(usize, f64)> = e.terms.iter().map(|&(v, a)| (v.0, a)).collect();
        let neg: Vec<(usize, f64)> = terms.iter().map(|&(v, a)| (v, -a)).collect();
        match c.sense {
            super::Sense::Le => raw.push((terms, c.rhs, c.name.clone())),
            super::Sense::Ge => raw.push((neg, -c.rhs, c.name.clone())),
            super::Sense::Eq => {
                raw.push((terms, c.rhs, c.name.clone()));
                raw.push((neg, -c.rhs, c.name.clone()));
            }
        }
    }

    let mut head_rows = vec![Vec::new(); n];
    let mut cont_edges: Vec<(usize, usize)> = Vec::new();
    for (r, (terms, _, name)) in raw.iter().enumerate().skip(1) {
        let heads: Vec<usize> = terms.iter().filter(|&&(v, a)| !is_int[v] && a < 0.0).map(|&(v, _)| v).collect();
        match heads.as_slice() {
            [] => {}
            [h] => {
                head_rows[*h].push(r);
                for &(v, a) in terms {
                    if !is_int[v] && a > 0.0 {
                        cont_edges.push((v, *h));
                    }
                }
            }
            _ => {
                return Err(Error::Model(format!(
                    "row `{name}` bounds several continuous variables from below; builtin solver needs epigraph rows"
                )))
            }
        }
    }
    let cont_vars: Vec<usize> = (0..n).filter(|&v| !is_int[v]).collect();
    let mut local = vec![usize::MAX; n];
    for (i, &v) in cont_vars.iter().enumerate() {
        local[v] = i;
    }
    let order = crate::graph::topo_sort(cont_vars.len(), cont_edges.iter().map(|&(a, b)| (local[a], local[b])))
        .map_err(|k| Error::Model(format!("cyclic epigraph dependency through {}", model.vars[cont_vars[k]].name)))?;
    let cont_order = order.into_iter().map(|i| cont_vars[i]).collect();

    let mut rows = Vec::with_capacity(raw.len());
    let mut var_rows = vec![Vec::new(); n];
    for (r, (terms, rhs, _)) in raw.into_iter().enumerate() {
        let mut singles = Vec::new();
        let mut segs: Vec<GroupSeg> = Vec::new();
        let mut per_group: Vec<(usize, Vec<(usize, f64)>)> = Vec::new();
        for &(v, a) in &terms {
            var_rows[v].push(r);
            let g = group_of[v];
            if g == usize::MAX {
                singles.push((v, a));
            } else if let Some(e) = per_group.iter_mut().find(|e| e.0 == g) {
                e.1.push((v, a));
            } else {
                per_group.push((g, vec![(v, a)]));
            }
        }
        for (g, members) in per_group {
            if members.len() < 2 {
                singles.extend(members);
                continue;
            }
            let coefs = groups[g]
                .iter()
                .map(|&gv| members.iter().find(|m| m.0 == gv).map_or(0.0, |m| m.1))
                .collect();
            // Every group member may now be fixed by this row.
            for &gv in &groups[g] {
                if !members.iter().any(|m| m.0 == gv) {
                    var_rows[gv].push(r);
                }
            }
            segs.push(GroupSeg { group: g, coefs });
        }
        rows.push(Row { singles, groups: segs, rhs });
    }

    Ok(Prepared {
        rows,
        var_rows,
        groups,
        decision_groups: model.decision_groups.clone(),
        is_int,
        cont_order,
        head_rows,
        obj,
        obj_const: objective.constant,
    })
}

/// Finite part and number of unbounded (−∞) contributions.
#[derive(Clone, Copy, Default)]
struct Activity {
    finite: f64,
    inf: u32,
}

struct Search<'a> {
    p: &'a Prepared,
    model: &'a Model,
    lb: Vec<f64>,
    ub: Vec<f64>,
    trail: Vec<(usize, f64, f64)>,
    queue: VecDeque<usize>,
    queued: Vec<bool>,
    best: Option<(f64, Vec<f64>)>,
    cutoff: f64,
    nodes: u64,
    aborted: bool,
    start: Instant,
    opts: &'a SolveOptions,
}

impl<'a> Search<'a> {
    fn single_min(&self, v: usize, a: f64) -> (f64, bool) {
        let b = if a > 0.0 { self.lb[v] } else { self.ub[v] };
        if b.is_infinite() {
            (0.0, true)
        } else {
            (a * b, false)
        }
    }

    fn group_min(&self, seg: &GroupSeg) -> f64 {
        let members = &self.p.groups[seg.group];
        let mut best = f64::INFINITY;
        for (i, &v) in members.iter().enumerate() {
            if self.lb[v] > 0.5 {
                return seg.coefs[i];
            }
            if self.ub[v] > 0.5 {
                best = best.min(seg.coefs[i]);
            }
        }
        // No member can be set: the node is infeasible; propagation on the
        // group's own row reports it.
        if best.is_infinite() {
            0.0
        } else {
            best
        }
    }

    fn row_activity(&self, row: &Row) -> Activity {
        let mut act = Activity::default();
        for &(v, a) in &row.singles {
            let (x, inf) = self.single_min(v, a);
            if inf {
                act.inf += 1;
            } else {
                act.finite += x;
            }
        }
        for seg in &row.groups {
            act.finite += self.group_min(seg);
        }
        act
    }

    fn set_bounds(&mut self, v: usize, lb: f64, ub: f64) {
        self.trail.push((v, self.lb[v], self.ub[v]));
        self.lb[v] = lb;
        self.ub[v] = ub;
        for &r in &self.p.var_rows[v] {
            if !self.queued[r] {
                self.queued[r] = true;
                self.queue.push_back(r);
            }
        }
    }

    /// Returns false when the row proves the node infeasible.
    fn tighten_upper(&mut self, v: usize, bound: f64) -> bool {
        let bound = if self.p.is_int[v] { (bound + 1e-9).floor() } else { bound };
        if bound < self.ub[v] - 1e-12 * (1.0 + bound.abs()) {
            if bound < self.lb[v] - FEAS_TOL * (1.0 + bound.abs()) {
                return false;
            }
            let lb = self.lb[v];
            self.set_bounds(v, lb, bound.max(lb));
        }
        true
    }

    fn tighten_lower(&mut self, v: usize, bound: f64) -> bool {
        let bound = if self.p.is_int[v] { (bound - 1e-9).ceil() } else { bound };
        if bound > self.lb[v] + 1e-12 * (1.0 + bound.abs()) {
            if bound > self.ub[v] + FEAS_TOL * (1.0 + bound.abs()) {
                return false;
            }
            let ub = self.ub[v];
            self.set_bounds(v, bound.min(ub), ub);
        }
        true
    }

    fn propagate_row(&mut self, r: usize) -> bool {
        let p = self.p;
        let row = &p.rows[r];
        let rhs = if r == 0 { self.cutoff } else { row.rhs };
        if rhs.is_infinite() {
            return true;
        }
        let act = self.row_activity(row);
        let scale = 1.0 + rhs.abs().max(act.finite.abs());
        if act.inf == 0 && act.finite > rhs + FEAS_TOL * scale {
            return false;
        }
        for &(v, a) in &row.singles {
            let (own, own_inf) = self.single_min(v, a);
            if act.inf - own_inf as u32 > 0 {
                continue;
            }
            let limit = (rhs - (act.finite - own)) / a;
            let ok = if a > 0.0 { self.tighten_upper(v, limit) } else { self.tighten_lower(v, limit) };
            if !ok {
                return false;
            }
        }
        if act.inf > 0 {
            return true;
        }
        for seg in &row.groups {
            let rest = act.finite - self.group_min(seg);
            for (i, &v) in p.groups[seg.group].iter().enumerate() {
                if self.ub[v] > 0.5 && self.lb[v] < 0.5 && rest + seg.coefs[i] > rhs + FEAS_TOL * scale {
                    self.set_bounds(v, 0.0, 0.0);
                }
            }
        }
        true
    }

    fn propagate(&mut self) -> bool {
        let mut budget = 200 * self.p.rows.len() + 1000;
        while let Some(r) = self.queue.pop_front() {
            self.queued[r] = false;
            if !self.propagate_row(r) {
                self.clear_queue();
                return false;
            }
            budget -= 1;
            if budget == 0 {
                self.clear_queue();
                break;
            }
        }
        true
    }

    fn clear_queue(&mut self) {
        for r in self.queue.drain(..) {
            self.queued[r] = false;
        }
    }

    fn undo_to(&mut self, mark: usize) {
        while self.trail.len() > mark {
            let (v, lb, ub) = self.trail.pop().expect("trail nonempty");
            self.lb[v] = lb;
            self.ub[v] = ub;
        }
    }

    fn objective_bound(&self) -> f64 {
        self.p.obj_const
            + self
                .p
                .obj
                .iter()
                .map(|&(v, c)| if c > 0.0 { c * self.lb[v] } else { c * self.ub[v] })
                .sum::<f64>()
    }

    fn fix_and_propagate(&mut self, v: usize, lb: f64, ub: f64) -> bool {
        self.set_bounds(v, lb, ub);
        self.propagate()
    }

    /// Exact least continuous completion once every integer is fixed.
    fn evaluate_leaf(&mut self) {
        let n = self.lb.len();
        let mut x = vec![0.0; n];
        for v in 0..n {
            if self.p.is_int[v] {
                x[v] = self.lb[v].round();
            }
        }
        for &v in &self.p.cont_order {
            let mut val = self.model.vars[v].lb;
            for &r in &self.p.head_rows[v] {
                let row = &self.p.rows[r];
                let mut head = 0.0;
                let mut rest = 0.0;
                for &(u, a) in &row.singles {
                    if u == v {
                        head = a;
                    } else {
                        rest += a * x[u];
                    }
                }
                for seg in &row.groups {
                    for (i, &u) in self.p.groups[seg.group].iter().enumerate() {
                        rest += seg.coefs[i] * x[u];
                    }
                }
                val = val.max((rest - row.rhs) / -head);
            }
            if val == f64::NEG_INFINITY {
                val = 0.0f64.min(self.model.vars[v].ub);
            }
            x[v] = val;
        }
        if !self.model.is_feasible(&x, FEAS_TOL) {
            return;
        }
        let obj = self.model.objective.as_ref().expect("validated").eval(&x);
        if self.best.as_ref().map_or(true, |(b, _)| obj < *b) {
            self.set_incumbent(obj, x);
        }
    }

    fn set_incumbent(&mut self, obj: f64, x: Vec<f64>) {
        self.best = Some((obj, x));
        // Row 0 carries the objective terms without their constant.
        self.cutoff = obj - CUTOFF_REL * obj.abs().max(1e-300) - self.p.obj_const;
        if !self.queued[0] {
            self.queued[0] = true;
            self.queue.push_back(0);
        }
    }

    fn out_of_budget(&mut self) -> bool {
        if self.aborted {
            return true;
        }
        if self.nodes >= self.opts.node_limit
            || (self.nodes % 256 == 0 && self.start.elapsed() >= self.opts.time_limit)
        {
            self.aborted = true;
        }
        self.aborted
    }

    /// Next branching choice: the first undecided decision group, else the
    /// first unfixed integer variable.
    fn pick_branch(&self) -> Option<Branch> {
        for &g in &self.p.decision_groups {
            let members = &self.p.groups[g];
            if members.iter().any(|&v| self.lb[v] > 0.5) {
                continue;
            }
            let free: Vec<usize> = members.iter().copied().filter(|&v| self.ub[v] > 0.5).collect();
            if free.len() > 1 {
                return Some(Branch::Group(free));
            }
        }
        (0..self.lb.len())
            .find(|&v| self.p.is_int[v] && self.lb[v] < self.ub[v])
            .map(Branch::Var)
    }

    fn children(&self, b: &Branch) -> Vec<(usize, f64, f64)> {
        match b {
            Branch::Group(free) => free.iter().map(|&v| (v, 1.0, 1.0)).collect(),
            Branch::Var(v) => {
                let (lo, hi) = (self.lb[*v], self.ub[*v]);
                let mid = ((lo + hi) / 2.0).floor();
                vec![(*v, lo, mid), (*v, mid + 1.0, hi)]
            }
        }
    }

    fn dfs(&mut self) {
        self.nodes += 1;
        if self.out_of_budget() {
            return;
        }
        if !self.propagate() {
            return;
        }
        if self.best.is_some() && self.objective_bound() > self.cutoff + self.p.obj_const {
            return;
        }
        let Some(branch) = self.pick_branch() else {
            self.evaluate_leaf();
            return;
        };

        // Probe every child once so the most promising is explored first.
        let mut scored = Vec::new();
        for (i, (v, lo, hi)) in self.children(&branch).into_iter().enumerate() {
            let mark = self.trail.len();
            if self.fix_and_propagate(v, lo, hi) {
                scored.push((self.objective_bound(), i, v, lo, hi));
            }
            self.undo_to(mark);
        }
        scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for (bound, _, v, lo, hi) in scored {
            if self.best.is_some() && bound > self.cutoff + self.p.obj_const {
                break;
            }
            let mark = self.trail.len();
            self.set_bounds(v, lo, hi);
            if !self.queued[0] {
                self.queued[0] = true;
                self.queue.push_back(0);
            }
            self.dfs();
            self.clear_queue();
            self.undo_to(mark);
            if self.aborted {
                return;
            }
        }
    }
}

enum Branch {
    Group(Vec<usize>),
    Var(usize),
}

pub fn solve_builtin(model: &Model, opts: &SolveOptions) -> Result<Solution> {
    let p = prepare(model)?;
    let n = model.vars.len();
    let rows = p.rows.len();
    let mut s = Search {
        p: &p,
        model,
        lb: model.vars.iter().map(|v| v.lb).collect(),
        ub: model.vars.iter().map(|v| v.ub).collect(),
        trail: Vec::new(),
        queue: (0..rows).collect(),
        queued: vec![true; rows],
        best: None,
        cutoff: f64::INFINITY,
        nodes: 0,
        aborted: false,
        start: Instant::now(),
        opts,
    };
    debug_assert_eq!(s.lb.len(), n);
    if let Some(hint) = &opts.hint {
        if model.is_feasible(hint, FEAS_TOL) {
            let obj = model.objective.as_ref().expect("validated").eval(hint);
            s.set_incumbent(obj, hint.clone());
        }
    }
    s.dfs();
    let nodes = s.nodes;
    let aborted = s.aborted;
    Ok(match s.best {
        Some((objective, values)) => Solution {
            status: if aborted { Status::Timeout } else { Status::Optimal },
            objective,
            values,
            nodes,
        },
        None => Solution {
            status: if aborted { Status::Timeout } else { Status::Infeasible },
            objective: f64::INFINITY,
            values: Vec::new(),
            nodes,
        },
    })
}
