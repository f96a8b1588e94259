//! Exhaustive reference search for small instances, used to certify that
//! the MILP optima are exact. Every candidate goes through the same
//! `evaluate_*` paths the solvers use to report their results.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{DataflowGraph, Tensor};
use crate::interchip::{evaluate_with_costs, InterChipMapping, InterchipCosts, InterchipOptions};
use crate::intrachip::{evaluate_intrachip, tile_menu, ChipWorkload, IntraChipMapping};
use crate::system::{ChipSpec, SystemSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleLimits {
    pub max_kernels: usize,
    pub max_partitions: usize,
    pub max_schemes: usize,
    pub max_tile_menu: usize,
}

impl Default for OracleLimits {
    fn default() -> Self {
        OracleLimits { max_kernels: 6, max_partitions: 3, max_schemes: 2, max_tile_menu: 3 }
    }
}

/// Hard cap on candidate mappings regardless of the limits above.
pub const MAX_CANDIDATES: f64 = 1e7;

fn check(what: &str, value: usize, limit: usize) -> Result<()> {
    if value > limit {
        return Err(Error::LimitExceeded(format!("{what} = {value} exceeds oracle limit {limit}")));
    }
    Ok(())
}

/// Every assignment of `n` kernels to `p` partitions with src ≤ dst on each
/// tensor, in lexicographic order.
pub fn monotone_assignments(n: usize, p: usize, tensors: &[Tensor]) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![0; n];
    fn rec(k: usize, n: usize, p: usize, tensors: &[Tensor], cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k == n {
            out.push(cur.clone());
            return;
        }
        for i in 0..p {
            cur[k] = i;
            let ok = tensors.iter().all(|t| t.src.max(t.dst) != k || cur[t.src] <= cur[t.dst]);
            if ok {
                rec(k + 1, n, p, tensors, cur, out);
            }
        }
    }
    if n > 0 && p > 0 {
        rec(0, n, p, tensors, &mut cur, &mut out);
    }
    out
}

/// Calls `f` on every mixed-radix vector below `radix`, in lexicographic order.
fn for_each_choice(radix: &[usize], mut f: impl FnMut(&[usize])) {
    if radix.contains(&0) {
        return;
    }
    let mut idx = vec![0; radix.len()];
    loop {
        f(&idx);
        let mut pos = radix.len();
        loop {
            if pos == 0 {
                return;
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < radix[pos] {
                break;
            }
            idx[pos] = 0;
        }
    }
}

/// Keeps the first strictly smaller objective, so ties resolve to the
/// lexicographically smallest candidate.
fn argmin<T>(candidates: impl IntoIterator<Item = Option<(f64, T)>>) -> Option<(f64, T)> {
    let mut best: Option<(f64, T)> = None;
    for c in candidates.into_iter().flatten() {
        if best.as_ref().is_none_or(|b| c.0 < b.0) {
            best = Some(c);
        }
    }
    best
}

/// Optimal inter-chip mapping by enumerating stage assignments and schemes.
pub fn enumerate_interchip(
    g: &DataflowGraph,
    sys: &SystemSpec,
    opts: &InterchipOptions,
    limits: &OracleLimits,
) -> Result<InterChipMapping> {
    let costs = InterchipCosts::new(g, sys, opts)?;
    let p = costs.n_pp;
    check("kernels", g.n(), limits.max_kernels)?;
    check("pipeline stages", p, limits.max_partitions)?;
    let radix: Vec<usize> = costs.schemes.iter().map(|s| s.len()).collect();
    for (k, &r) in radix.iter().enumerate() {
        check(&format!("schemes of kernel {}", g.kernels[k].name), r, limits.max_schemes)?;
    }
    let size = (p as f64).powi(g.n() as i32) * radix.iter().map(|&r| r as f64).product::<f64>();
    if size > MAX_CANDIDATES {
        return Err(Error::LimitExceeded(format!("{size:.0} candidate mappings")));
    }
    let assignments = monotone_assignments(g.n(), p, &g.tensors);
    let per_assignment: Vec<Option<(f64, InterChipMapping)>> = assignments
        .par_iter()
        .map(|parts| {
            let mut best: Option<(f64, Vec<usize>)> = None;
            let mut err = None;
            for_each_choice(&radix, |idx| match evaluate_with_costs(g, sys, &costs, parts, idx, opts) {
                Ok(m) if best.as_ref().is_none_or(|b| m.objective < b.0) => best = Some((m.objective, idx.to_vec())),
                Ok(_) => {}
                Err(e) => err = Some(e),
            });
            debug_assert!(err.is_none(), "monotone assignment rejected: {err:?}");
            best.and_then(|(obj, idx)| evaluate_with_costs(g, sys, &costs, parts, &idx, opts).ok().map(|m| (obj, m)))
        })
        .collect();
    let (_, mut best) = argmin(per_assignment).ok_or_else(|| Error::Infeasible("no precedence-feasible assignment".into()))?;
    best.optimal = true;
    Ok(best)
}

/// Optimal intra-chip mapping over partition assignments and the tile menu.
pub fn enumerate_intrachip(
    w: &ChipWorkload,
    chip: &ChipSpec,
    p_max: usize,
    menu_size: usize,
    limits: &OracleLimits,
) -> Result<IntraChipMapping> {
    let g = &w.graph;
    check("kernels", g.n(), limits.max_kernels)?;
    check("partitions", p_max, limits.max_partitions)?;
    check("tile menu", menu_size, limits.max_tile_menu)?;
    let menu = tile_menu(chip.t_lim, menu_size);
    let size = (p_max as f64 * menu.len() as f64).powi(g.n() as i32);
    if size > MAX_CANDIDATES {
        return Err(Error::LimitExceeded(format!("{size:.0} candidate mappings")));
    }
    let radix = vec![menu.len(); g.n()];
    let assignments = monotone_assignments(g.n(), p_max, &g.tensors);
    let per_assignment: Vec<Option<(f64, IntraChipMapping)>> = assignments
        .par_iter()
        .map(|parts| {
            let mut best: Option<(f64, Vec<u64>)> = None;
            let mut tiles = vec![0u64; g.n()];
            for_each_choice(&radix, |idx| {
                for (t, &e) in tiles.iter_mut().zip(idx) {
                    *t = menu[e];
                }
                // Capacity and tile-limit violations mark infeasible candidates.
                if let Ok(m) = evaluate_intrachip(w, chip, parts, &tiles, p_max) {
                    if best.as_ref().is_none_or(|b| m.objective < b.0) {
                        best = Some((m.objective, tiles.clone()));
                    }
                }
            });
            best.and_then(|(obj, t)| evaluate_intrachip(w, chip, parts, &t, p_max).ok().map(|m| (obj, m)))
        })
        .collect();
    let (_, mut best) = argmin(per_assignment)
        .ok_or_else(|| Error::Infeasible("no assignment satisfies the SRAM/DRAM capacity and tile limits".into()))?;
    best.optimal = true;
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(n: usize) -> Vec<Tensor> {
        (0..n.saturating_sub(1)).map(|i| Tensor { id: i, src: i, dst: i + 1, bytes: 1.0 }).collect()
    }

    fn binomial(n: u64, k: u64) -> u64 {
        (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
    }

    #[test]
    fn chain_assignments_are_monotone_maps() {
        // Nondecreasing maps of an n-chain into p values: C(n + p - 1, n).
        for n in 1..=5 {
            for p in 1..=4 {
                let got = monotone_assignments(n, p, &chain(n)).len() as u64;
                assert_eq!(got, binomial((n + p - 1) as u64, n as u64), "n={n} p={p}");
            }
        }
        assert_eq!(monotone_assignments(3, 2, &chain(3)).len(), 4);
    }

    #[test]
    fn unconstrained_assignments_are_all_maps() {
        assert_eq!(monotone_assignments(3, 3, &[]).len(), 27);
        assert_eq!(monotone_assignments(1, 1, &[]), vec![vec![0]]);
    }

    #[test]
    fn back_edges_are_respected() {
        // Tensor from kernel 2 into kernel 0.
        let t = [Tensor { id: 0, src: 2, dst: 0, bytes: 1.0 }];
        for a in monotone_assignments(3, 3, &t) {
            assert!(a[2] <= a[0]);
        }
    }

    #[test]
    fn mixed_radix_order() {
        let mut seen = Vec::new();
        for_each_choice(&[2, 3], |i| seen.push(i.to_vec()));
        assert_eq!(seen.len(), 6);
        assert_eq!(seen[1], vec![0, 1]);
        assert_eq!(seen[3], vec![1, 0]);
    }
}
