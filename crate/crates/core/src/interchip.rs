//! Inter-chip level: one sharding scheme per kernel for tensor parallelism
//! and a precedence-respecting split of the graph into pipeline stages,
//! minimizing the slowest stage.

use serde::{Deserialize, Serialize};

use crate::collectives::{cost_over, CollectiveKind};
use crate::error::{Error, Result};
use crate::graph::{DataflowGraph, Kernel, Tensor};
use crate::mapmat::AssignmentMatrices;
use crate::milp::{self, lin_and, Backend, LinExpr, Model, SolveOptions, Status, VarId};
use crate::sharding::{conversion, kernel_schemes, ShardingScheme};
use crate::system::{NetworkDim, SystemSpec};

/// How one training (or inference) iteration scales the forward graph.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PassModel {
    pub training: bool,
    /// Backward FLOP as a multiple of forward FLOP.
    pub backward_flop_multiplier: f64,
}

impl Default for PassModel {
    fn default() -> Self {
        PassModel { training: true, backward_flop_multiplier: 2.0 }
    }
}

impl PassModel {
    pub fn inference() -> Self {
        PassModel { training: false, ..Default::default() }
    }

    pub fn flop_factor(&self) -> f64 {
        if self.training {
            1.0 + self.backward_flop_multiplier
        } else {
            1.0
        }
    }

    /// Collectives and activation traffic are mirrored by the backward pass.
    pub fn comm_factor(&self) -> f64 {
        if self.training {
            2.0
        } else {
            1.0
        }
    }
}

#[derive(Debug, Clone)]
pub struct InterchipOptions {
    pub pass: PassModel,
    /// Fixed cost added to every collective that moves data.
    pub launch_overhead: f64,
    pub solve: SolveOptions,
    pub backend: Backend,
}

impl Default for InterchipOptions {
    fn default() -> Self {
        InterchipOptions { pass: PassModel::default(), launch_overhead: 1e-6, solve: SolveOptions::default(), backend: Backend::Builtin }
    }
}

fn with_overhead(cost: f64, overhead: f64) -> f64 {
    if cost > 0.0 {
        cost + overhead
    } else {
        0.0
    }
}

/// Inherent collective cost of each applicable scheme of `k` over the TP dims.
pub fn kernel_comm_vector(k: &Kernel, tp_dims: &[NetworkDim], launch_overhead: f64) -> Result<Vec<f64>> {
    let schemes = kernel_schemes(k)?;
    if schemes.is_empty() {
        return Err(Error::Validation(format!("kernel {} has no sharding scheme", k.name)));
    }
    schemes
        .iter()
        .map(|s| match s.inherent_bytes(k) {
            Some((kind, bytes)) => Ok(with_overhead(cost_over(kind, bytes, tp_dims)?, launch_overhead)),
            None => Ok(0.0),
        })
        .collect()
}

/// Layout-conversion cost of tensor `t` for every (producer, consumer) scheme pair.
pub fn conversion_matrix(
    t: &Tensor,
    src_schemes: &[&ShardingScheme],
    dst_schemes: &[&ShardingScheme],
    tp_dims: &[NetworkDim],
    launch_overhead: f64,
) -> Result<Vec<Vec<f64>>> {
    src_schemes
        .iter()
        .map(|a| {
            dst_schemes
                .iter()
                .map(|b| match conversion(a.output_layout, b.input_layout) {
                    Some(kind) => Ok(with_overhead(cost_over(kind, t.bytes, tp_dims)?, launch_overhead)),
                    None => Ok(0.0),
                })
                .collect()
        })
        .collect()
}

/// Gradient all-reduce of `param_bytes` over the DP dimensions.
pub fn dp_overhead(sys: &SystemSpec, param_bytes: f64) -> Result<f64> {
    cost_over(CollectiveKind::AllReduce, param_bytes, &sys.dp_network())
}

/// Every per-iteration cost term of the inter-chip problem.
#[derive(Debug, Clone)]
pub struct InterchipCosts {
    pub schemes: Vec<Vec<&'static ShardingScheme>>,
    /// h_c[k][a]: compute seconds of kernel k under scheme a.
    pub h_c: Vec<Vec<f64>>,
    /// c[k][a]: inherent collective seconds.
    pub c: Vec<Vec<f64>>,
    /// conv[j][a][b]: conversion seconds for tensor j.
    pub conv: Vec<Vec<Vec<f64>>>,
    /// h_p[j]: point-to-point seconds when tensor j crosses stages.
    pub h_p: Vec<f64>,
    pub n_pp: usize,
    pub n_tp: usize,
}

impl InterchipCosts {
    pub fn new(g: &DataflowGraph, sys: &SystemSpec, opts: &InterchipOptions) -> Result<Self> {
        g.validate()?;
        sys.validate()?;
        let tp = sys.tp_network();
        let peak = sys.chip.peak_flops();
        let ff = opts.pass.flop_factor();
        let cf = opts.pass.comm_factor();
        let schemes: Vec<Vec<&'static ShardingScheme>> = g.kernels.iter().map(kernel_schemes).collect::<Result<_>>()?;
        for (k, s) in g.kernels.iter().zip(&schemes) {
            if s.is_empty() {
                return Err(Error::Validation(format!("kernel {} has no sharding scheme", k.name)));
            }
        }
        let h_c = g
            .kernels
            .iter()
            .zip(&schemes)
            .map(|(k, ss)| ss.iter().map(|s| ff * k.flop * s.flop_scale(sys.n_tp) / peak).collect())
            .collect();
        let c = g
            .kernels
            .iter()
            .map(|k| Ok(kernel_comm_vector(k, &tp, opts.launch_overhead)?.into_iter().map(|x| cf * x).collect()))
            .collect::<Result<_>>()?;
        let conv = g
            .tensors
            .iter()
            .map(|t| {
                let m = conversion_matrix(t, &schemes[t.src], &schemes[t.dst], &tp, opts.launch_overhead)?;
                Ok(m.into_iter().map(|row| row.into_iter().map(|x| cf * x).collect()).collect())
            })
            .collect::<Result<_>>()?;
        let pp_bw = sys.pp_bandwidth();
        let pp_lat = sys.pp_latency();
        let h_p = g.tensors.iter().map(|t| cf * (t.bytes / pp_bw + pp_lat)).collect();
        Ok(InterchipCosts { schemes, h_c, c, conv, h_p, n_pp: sys.n_pp, n_tp: sys.n_tp })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterChipMapping {
    pub p_max: usize,
    /// Stage of every kernel.
    pub partitions: Vec<usize>,
    /// Chosen scheme id of every kernel.
    pub schemes: Vec<String>,
    #[serde(skip)]
    pub scheme_index: Vec<usize>,
    #[serde(skip)]
    pub mats: Option<AssignmentMatrices>,
    pub t_comp: Vec<f64>,
    pub t_net: Vec<f64>,
    pub t_p2p: Vec<f64>,
    pub t_cri: Vec<f64>,
    /// max over stages of t_cri.
    pub objective: f64,
    pub dp_time: f64,
    pub optimal: bool,
}

impl InterChipMapping {
    pub fn bottleneck(&self) -> usize {
        (0..self.t_cri.len()).fold(0, |b, i| if self.t_cri[i] > self.t_cri[b] { i } else { b })
    }

    /// Kernels of stage `i` in graph order.
    pub fn stage_kernels(&self, i: usize) -> Vec<usize> {
        (0..self.partitions.len()).filter(|&k| self.partitions[k] == i).collect()
    }
}

/// Scheme index per kernel from ids.
pub fn scheme_indices(g: &DataflowGraph, ids: &[String]) -> Result<Vec<usize>> {
    if ids.len() != g.n() {
        return Err(Error::Validation(format!("{} scheme choices for {} kernels", ids.len(), g.n())));
    }
    g.kernels
        .iter()
        .zip(ids)
        .map(|(k, id)| {
            k.scheme_ids
                .iter()
                .position(|s| s == id)
                .ok_or_else(|| Error::Validation(format!("scheme `{id}` is not applicable to kernel {}", k.name)))
        })
        .collect()
}

/// Stage times of a fixed mapping.
pub fn evaluate_with_costs(
    g: &DataflowGraph,
    sys: &SystemSpec,
    costs: &InterchipCosts,
    partitions: &[usize],
    scheme_index: &[usize],
    opts: &InterchipOptions,
) -> Result<InterChipMapping> {
    let p = costs.n_pp;
    if partitions.len() != g.n() || scheme_index.len() != g.n() {
        return Err(Error::Validation("mapping must cover every kernel".into()));
    }
    for (k, &a) in scheme_index.iter().enumerate() {
        if a >= costs.schemes[k].len() {
            return Err(Error::Validation(format!("scheme index {a} out of range for kernel {}", g.kernels[k].name)));
        }
    }
    let mats = AssignmentMatrices::from_partitions(partitions, p, &g.tensors)?;
    let mut t_comp = vec![0.0; p];
    let mut t_net = vec![0.0; p];
    let mut weights = vec![0.0; p];
    for k in 0..g.n() {
        let (i, a) = (partitions[k], scheme_index[k]);
        t_comp[i] += costs.h_c[k][a];
        t_net[i] += costs.c[k][a];
        weights[i] += g.kernels[k].weight_bytes * weight_scale(costs.schemes[k][a], costs.n_tp);
    }
    for (j, t) in g.tensors.iter().enumerate() {
        t_net[partitions[t.src]] += costs.conv[j][scheme_index[t.src]][scheme_index[t.dst]];
    }
    let t_p2p = AssignmentMatrices::aggregate(&mats.l, &costs.h_p, p);
    let t_cri: Vec<f64> = (0..p).map(|i| t_comp[i].max(t_net[i]).max(t_p2p[i])).collect();
    let objective = t_cri.iter().copied().fold(0.0, f64::max);
    let dp_time = if opts.pass.training { dp_overhead(sys, weights.iter().copied().fold(0.0, f64::max))? } else { 0.0 };
    Ok(InterChipMapping {
        p_max: p,
        partitions: partitions.to_vec(),
        schemes: scheme_index.iter().enumerate().map(|(k, &a)| costs.schemes[k][a].id.to_string()).collect(),
        scheme_index: scheme_index.to_vec(),
        mats: Some(mats),
        t_comp,
        t_net,
        t_p2p,
        t_cri,
        objective,
        dp_time,
        optimal: false,
    })
}

/// Per-chip share of a kernel's weights under a scheme.
pub fn weight_scale(s: &ShardingScheme, n_tp: usize) -> f64 {
    let replicated_weights = matches!(s.inherent, Some((_, crate::sharding::Operand::Weights)));
    if s.sharded && !replicated_weights {
        1.0 / n_tp.max(1) as f64
    } else {
        1.0
    }
}

pub fn evaluate_interchip(
    g: &DataflowGraph,
    sys: &SystemSpec,
    partitions: &[usize],
    schemes: &[String],
    opts: &InterchipOptions,
) -> Result<InterChipMapping> {
    let costs = InterchipCosts::new(g, sys, opts)?;
    let idx = scheme_indices(g, schemes)?;
    evaluate_with_costs(g, sys, &costs, partitions, &idx, opts)
}

/// Variables of the inter-chip program, kept for solution extraction.
pub struct InterchipProblem {
    pub model: Model,
    pub costs: InterchipCosts,
    /// x[k][i][a]: kernel k runs in stage i with scheme a.
    pub x: Vec<Vec<Vec<VarId>>>,
    pub objective: VarId,
}

pub fn build_interchip(g: &DataflowGraph, sys: &SystemSpec, opts: &InterchipOptions) -> Result<InterchipProblem> {
    let costs = InterchipCosts::new(g, sys, opts)?;
    let p = costs.n_pp;
    let n = g.n();
    let mut m = Model::new();

    let x: Vec<Vec<Vec<VarId>>> = (0..n)
        .map(|k| {
            (0..p)
                .map(|i| (0..costs.schemes[k].len()).map(|a| m.bool_var(format!("x_{k}_{i}_{a}"))).collect())
                .collect()
        })
        .collect();
    for k in g.topological_order()? {
        let members: Vec<VarId> = x[k].iter().flatten().copied().collect();
        m.decision(format!("choose_{k}"), &members);
    }

    let a: Vec<Vec<VarId>> = (0..n)
        .map(|k| {
            (0..p)
                .map(|i| {
                    let v = m.bool_var(format!("A_{k}_{i}"));
                    let mut e = LinExpr::from(v);
                    e.add_expr(&LinExpr::sum(x[k][i].iter().copied()), -1.0);
                    m.eq("A_def", e, 0.0);
                    v
                })
                .collect()
        })
        .collect();
    let s: Vec<Vec<VarId>> = (0..n)
        .map(|k| {
            let vars: Vec<VarId> = (0..costs.schemes[k].len())
                .map(|sa| {
                    let v = m.bool_var(format!("s_{k}_{sa}"));
                    let mut e = LinExpr::from(v);
                    e.add_expr(&LinExpr::sum((0..p).map(|i| x[k][i][sa])), -1.0);
                    m.eq("s_def", e, 0.0);
                    v
                })
                .collect();
            m.one_hot(format!("s_{k}"), &vars);
            vars
        })
        .collect();

    // Precedence and empty stages only at the end.
    for t in &g.tensors {
        let mut e = LinExpr::new();
        for i in 0..p {
            e.push(a[t.dst][i], i as f64);
            e.push(a[t.src][i], -(i as f64));
        }
        m.ge(format!("prec_{}", t.id), e, 0.0);
    }
    for i in 0..p.saturating_sub(1) {
        let mut e = LinExpr::new();
        for k in 0..n {
            e.push(a[k][i + 1], 1.0);
            e.push(a[k][i], -(n as f64));
        }
        m.le(format!("stage_prefix_{i}"), e, 0.0);
    }

    let z = m.cont_var("z", 0.0, f64::INFINITY);
    for i in 0..p {
        let comp = m.cont_var(format!("t_comp_{i}"), 0.0, f64::INFINITY);
        let net = m.cont_var(format!("t_net_{i}"), 0.0, f64::INFINITY);
        let p2p = m.cont_var(format!("t_p2p_{i}"), 0.0, f64::INFINITY);

        let mut ec = LinExpr::from(comp);
        let mut en = LinExpr::from(net);
        for k in 0..n {
            for (sa, &v) in x[k][i].iter().enumerate() {
                ec.push(v, -costs.h_c[k][sa]);
                en.push(v, -costs.c[k][sa]);
            }
        }
        // Conversion cost charged to the producer's stage.
        for (j, t) in g.tensors.iter().enumerate() {
            for (sa, row) in costs.conv[j].iter().enumerate() {
                for (sb, &cost) in row.iter().enumerate() {
                    if cost > 0.0 {
                        let y = lin_and(&mut m, x[t.src][i][sa], s[t.dst][sb]);
                        en.push(y, -cost);
                    }
                }
            }
        }
        m.ge(format!("t_comp_{i}"), ec, 0.0);
        m.ge(format!("t_net_{i}"), en, 0.0);

        if p > 1 {
            let mut ep = LinExpr::from(p2p);
            for (j, t) in g.tensors.iter().enumerate() {
                // L[j][i] = [src ≤ i] − [dst < i] − B[j][i] under precedence.
                let l = m.bool_var(format!("L_{j}_{i}"));
                let b = lin_and(&mut m, a[t.src][i], a[t.dst][i]);
                let mut def = LinExpr::from(l).term(b, 1.0);
                for i2 in 0..=i {
                    def.push(a[t.src][i2], -1.0);
                }
                for i2 in 0..i {
                    def.push(a[t.dst][i2], 1.0);
                }
                m.eq("L_def", def, 0.0);
                ep.push(l, -costs.h_p[j]);
            }
            m.ge(format!("t_p2p_{i}"), ep, 0.0);
        }
        for t in [comp, net, p2p] {
            m.ge("z_ge", LinExpr::from(z).term(t, -1.0), 0.0);
        }
    }

    // Redundant bounds that tighten the search before stages are decided.
    let mut avg = LinExpr::from(z);
    for k in 0..n {
        let mut per_kernel = LinExpr::from(z);
        for i in 0..p {
            for (sa, &v) in x[k][i].iter().enumerate() {
                avg.push(v, -costs.h_c[k][sa] / p as f64);
                per_kernel.push(v, -costs.h_c[k][sa].max(costs.c[k][sa]));
            }
        }
        m.ge("z_kernel", per_kernel, 0.0);
    }
    m.ge("z_avg", avg, 0.0);
    m.minimize(z.into());
    Ok(InterchipProblem { model: m, costs, x, objective: z })
}

/// Solves the inter-chip program and evaluates the extracted mapping.
pub fn solve_interchip(g: &DataflowGraph, sys: &SystemSpec, opts: &InterchipOptions) -> Result<InterChipMapping> {
    let prob = build_interchip(g, sys, opts)?;
    let mut solve_opts = opts.solve.clone();
    if solve_opts.hint.is_none() {
        solve_opts.hint = Some(greedy_hint(g, sys, &prob, opts)?);
    }
    let sol = milp::solve(&prob.model, &opts.backend, &solve_opts)?;
    match sol.status {
        Status::Infeasible => return Err(Error::Infeasible("inter-chip precedence/stage constraints".into())),
        Status::Timeout if !sol.has_incumbent() => return Err(Error::Timeout),
        _ => {}
    }
    let mut parts = vec![0; g.n()];
    let mut idx = vec![0; g.n()];
    for k in 0..g.n() {
        for i in 0..prob.costs.n_pp {
            for (sa, &v) in prob.x[k][i].iter().enumerate() {
                if sol.is_set(v) {
                    parts[k] = i;
                    idx[k] = sa;
                }
            }
        }
    }
    let mut mapping = evaluate_with_costs(g, sys, &prob.costs, &parts, &idx, opts)?;
    mapping.optimal = sol.status == Status::Optimal;
    Ok(mapping)
}

/// A feasible starting point: contiguous stages over the topological order
/// balanced on compute with each kernel's cheapest scheme in isolation,
/// then improved by single-kernel moves.
fn greedy_hint(g: &DataflowGraph, sys: &SystemSpec, prob: &InterchipProblem, opts: &InterchipOptions) -> Result<Vec<f64>> {
    let costs = &prob.costs;
    let order = g.topological_order()?;
    let mut idx: Vec<usize> = (0..g.n())
        .map(|k| {
            (0..costs.schemes[k].len())
                .min_by(|&a, &b| {
                    let ca = costs.h_c[k][a].max(costs.c[k][a]);
                    let cb = costs.h_c[k][b].max(costs.c[k][b]);
                    ca.total_cmp(&cb)
                })
                .unwrap_or(0)
        })
        .collect();
    let total: f64 = (0..g.n()).map(|k| costs.h_c[k][idx[k]]).sum();
    let p = costs.n_pp;
    let mut parts = vec![0; g.n()];
    let mut acc = 0.0;
    for &k in &order {
        let stage = if total > 0.0 { ((acc / total) * p as f64).floor() as usize } else { 0 };
        parts[k] = stage.min(p - 1);
        acc += costs.h_c[k][idx[k]];
    }
    local_search(g, sys, costs, &mut parts, &mut idx, opts)?;
    compact_stages(&mut parts);
    Ok(assignment_values(g, prob, &parts, &idx))
}

/// Renumbers used stages to 0, 1, ... in order, so empty stages come last.
/// Stage times and crossing tensors are unchanged.
fn compact_stages(parts: &mut [usize]) {
    let mut used: Vec<usize> = parts.to_vec();
    used.sort_unstable();
    used.dedup();
    for p in parts.iter_mut() {
        *p = used.binary_search(p).expect("stage is used");
    }
}

/// Objective, then total stage time, so plateaus still make progress.
fn score(m: &InterChipMapping) -> (f64, f64) {
    (m.objective, m.t_cri.iter().sum())
}

/// First-improvement descent over single-kernel scheme and stage changes.
fn local_search(
    g: &DataflowGraph,
    sys: &SystemSpec,
    costs: &InterchipCosts,
    parts: &mut [usize],
    idx: &mut [usize],
    opts: &InterchipOptions,
) -> Result<()> {
    let mut best = score(&evaluate_with_costs(g, sys, costs, parts, idx, opts)?);
    for _round in 0..50 {
        let mut improved = false;
        for k in 0..g.n() {
            for stage in 0..costs.n_pp {
                for a in 0..costs.schemes[k].len() {
                    if (stage, a) == (parts[k], idx[k]) {
                        continue;
                    }
                    let ok = g.tensors.iter().all(|t| {
                        let ps = if t.src == k { stage } else { parts[t.src] };
                        let pd = if t.dst == k { stage } else { parts[t.dst] };
                        ps <= pd
                    });
                    if !ok {
                        continue;
                    }
                    let (old_stage, old_a) = (parts[k], idx[k]);
                    parts[k] = stage;
                    idx[k] = a;
                    let s = score(&evaluate_with_costs(g, sys, costs, parts, idx, opts)?);
                    let eps = 1e-12 * best.0.abs().max(1e-300);
                    if s.0 < best.0 - eps || (s.0 <= best.0 + eps && s.1 < best.1 - eps) {
                        best = s;
                        improved = true;
                    } else {
                        parts[k] = old_stage;
                        idx[k] = old_a;
                    }
                }
            }
        }
        if !improved {
            break;
        }
    }
    Ok(())
}

/// Full variable vector for a fixed mapping, by propagating the definitions.
pub fn assignment_values(g: &DataflowGraph, prob: &InterchipProblem, parts: &[usize], idx: &[usize]) -> Vec<f64> {
    let mut m = prob.model.clone();
    for k in 0..g.n() {
        for i in 0..prob.costs.n_pp {
            for (sa, &v) in prob.x[k][i].iter().enumerate() {
                let on = parts[k] == i && idx[k] == sa;
                m.vars[v.0].lb = on as u8 as f64;
                m.vars[v.0].ub = on as u8 as f64;
            }
        }
    }
    // With every decision fixed the search is a single propagated leaf.
    milp::solve_builtin(&m, &SolveOptions::default()).map(|s| s.values).unwrap_or_default()
}

/// Forward collectives issued by a scheme choice: (inherent, conversions).
pub fn collective_counts(g: &DataflowGraph, sys: &SystemSpec, scheme_ids: &[String]) -> Result<Vec<(CollectiveKind, usize)>> {
    let idx = scheme_indices(g, scheme_ids)?;
    let schemes: Vec<Vec<&ShardingScheme>> = g.kernels.iter().map(kernel_schemes).collect::<Result<_>>()?;
    let mut counts: Vec<(CollectiveKind, usize)> = CollectiveKind::ALL.iter().map(|&k| (k, 0)).collect();
    let mut bump = |kind: CollectiveKind| {
        if let Some(e) = counts.iter_mut().find(|e| e.0 == kind) {
            e.1 += 1;
        }
    };
    if sys.n_tp <= 1 {
        return Ok(counts);
    }
    for (k, kern) in g.kernels.iter().enumerate() {
        if let Some((kind, bytes)) = schemes[k][idx[k]].inherent_bytes(kern) {
            if bytes > 0.0 {
                bump(kind);
            }
        }
    }
    for t in &g.tensors {
        if let Some(kind) = conversion(schemes[t.src][idx[t.src]].output_layout, schemes[t.dst][idx[t.dst]].input_layout) {
            bump(kind);
        }
    }
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_gpt_layer, GptParams, KernelKind};
    use crate::sharding::scheme;
    use crate::system::{builtin_chips, ChipSpec, NetworkDim, Topology};

    const MB: f64 = 1e6;
    const GB: f64 = 1e9;

    fn ring(p: usize, bw: f64) -> NetworkDim {
        NetworkDim::new(Topology::Ring, p, bw)
    }

    fn gemm_kernel(output_bytes: f64) -> Kernel {
        Kernel {
            id: 0,
            name: "g".into(),
            kind: KernelKind::Gemm,
            flop: 16.0,
            gemm_dims: Some((2, 2, 2)),
            scheme_ids: crate::sharding::default_scheme_ids(KernelKind::Gemm),
            weight_bytes: 0.0,
            output_bytes,
        }
    }

    #[test]
    fn comm_vector_all_reduce_output() {
        let c = kernel_comm_vector(&gemm_kernel(12.0 * MB), &[ring(4, 25.0 * GB)], 0.0).unwrap();
        // gemm_partial all-reduces the output; gemm_row broadcasts 0 weight bytes.
        assert!((c[1] - 0.72e-3).abs() < 1e-15);
        assert_eq!(c[0], 0.0);
        let single = kernel_comm_vector(&gemm_kernel(12.0 * MB), &[ring(1, 25.0 * GB)], 0.0).unwrap();
        assert!(single.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn conversion_costs() {
        let t = Tensor { id: 0, src: 0, dst: 1, bytes: 12.0 * MB };
        let part = scheme("gemm_partial").unwrap();
        let col = scheme("gemm_col").unwrap();
        let m = conversion_matrix(&t, &[col], &[part], &[ring(4, 25.0 * GB)], 0.0).unwrap();
        assert_eq!(m[0][0], 0.0);
        let t8 = Tensor { bytes: 8.0 * MB, ..t };
        let row = scheme("elem_row").unwrap();
        let sw = NetworkDim::new(Topology::Switch, 4, 25.0 * GB);
        let m = conversion_matrix(&t8, &[row], &[col, part], &[sw], 0.0).unwrap();
        // row -> replicated is an all-gather; row -> col an all-to-all.
        assert!((m[0][1] - 8.0 * MB * 0.75 / (25.0 * GB)).abs() < 1e-15);
    }

    #[test]
    fn dp_overhead_closed_form() {
        let chip = builtin_chips()[0].clone();
        let sys = SystemSpec::new(chip.clone(), vec![ring(4, 100.0 * GB)], vec![], vec![], vec![0]).unwrap();
        assert!((dp_overhead(&sys, 1.0 * GB).unwrap() - 15e-3).abs() < 1e-15);
        assert!((dp_overhead(&sys, 2.0 * GB).unwrap() - 30e-3).abs() < 1e-15);
        assert_eq!(dp_overhead(&SystemSpec::single_chip(chip), GB).unwrap(), 0.0);
    }

    fn toy_chip() -> ChipSpec {
        ChipSpec {
            name: "toy".into(),
            t_lim: 1,
            t_flop: 1.0,
            s_cap: 1e9,
            d_cap: 1e12,
            d_bw: 1e9,
            tile_shape: (1, 1),
            power_w: None,
            price_usd: None,
        }
    }

    fn chain(flops: &[f64]) -> DataflowGraph {
        let kernels = flops
            .iter()
            .enumerate()
            .map(|(i, &f)| Kernel {
                id: i,
                name: format!("k{i}"),
                kind: KernelKind::Elementwise,
                flop: f,
                gemm_dims: None,
                scheme_ids: vec!["replicated".into()],
                weight_bytes: 0.0,
                output_bytes: 1.0,
            })
            .collect();
        let tensors = (1..flops.len()).map(|i| Tensor { id: i - 1, src: i - 1, dst: i, bytes: 1e-9 }).collect();
        DataflowGraph { name: "chain".into(), kernels, tensors, element_size: 2.0 }
    }

    #[test]
    fn single_kernel_single_stage() {
        let g = chain(&[5.0]);
        let sys = SystemSpec::single_chip(toy_chip());
        let opts = InterchipOptions { pass: PassModel::inference(), ..Default::default() };
        let m = solve_interchip(&g, &sys, &opts).unwrap();
        assert_eq!(m.objective, 5.0);
        assert!(m.optimal);
    }

    #[test]
    fn three_chain_balanced_split() {
        let g = chain(&[4.0, 3.0, 3.0]);
        let sys = SystemSpec::new(toy_chip(), vec![ring(2, 1e30)], vec![], vec![0], vec![]).unwrap();
        let opts = InterchipOptions { pass: PassModel::inference(), launch_overhead: 0.0, ..Default::default() };
        let m = solve_interchip(&g, &sys, &opts).unwrap();
        // Exhaustive over the 2^3 assignments: {k0} | {k1,k2} is best.
        assert!((m.objective - 6.0).abs() < 1e-9, "{m:?}");
        assert_eq!(m.partitions, vec![0, 1, 1]);
    }

    #[test]
    fn all_in_one_stage_has_no_p2p() {
        let g = chain(&[1.0, 2.0, 3.0]);
        let sys = SystemSpec::new(toy_chip(), vec![ring(3, 1.0)], vec![], vec![0], vec![]).unwrap();
        let m = evaluate_interchip(&g, &sys, &[0, 0, 0], &vec!["replicated".into(); 3], &InterchipOptions::default()).unwrap();
        assert!(m.t_p2p.iter().all(|&x| x == 0.0));
        let m = evaluate_interchip(&g, &sys, &[0, 1, 2], &vec!["replicated".into(); 3], &InterchipOptions::default()).unwrap();
        for i in 0..3 {
            assert_eq!(m.t_cri[i], m.t_comp[i].max(m.t_net[i]).max(m.t_p2p[i]));
        }
        assert!(evaluate_interchip(&g, &sys, &[1, 0, 0], &vec!["replicated".into(); 3], &InterchipOptions::default()).is_err());
    }

    fn sn10_ring8() -> SystemSpec {
        SystemSpec::new(crate::system::sn10(), vec![ring(8, 25.0 * GB)], vec![0], vec![], vec![]).unwrap()
    }

    #[test]
    fn megatron_schemes_on_gpt_layer() {
        let g = generate_gpt_layer(GptParams::new(1, 2048, 12288, 96, 4)).unwrap();
        let sys = sn10_ring8();
        let m = solve_interchip(&g, &sys, &InterchipOptions::default()).unwrap();
        let counts = collective_counts(&g, &sys, &m.schemes).unwrap();
        let ar = counts.iter().find(|c| c.0 == CollectiveKind::AllReduce).unwrap().1;
        assert_eq!(ar, 2, "{:?} {:?}", m.schemes, counts);
        assert!(counts.iter().filter(|c| c.0 != CollectiveKind::AllReduce).all(|c| c.1 == 0), "{counts:?}");
        let by_name = |n: &str| m.schemes[g.kernel_by_name(n).unwrap().id].clone();
        assert_eq!(by_name("Proj"), "gemm_partial");
        assert_eq!(by_name("FFN1"), "gemm_partial");
        assert_eq!(by_name("FFN0"), "gemm_col");
    }
}
