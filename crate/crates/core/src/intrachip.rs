//! Intra-chip level: fuse one chip's kernels into sequential on-chip
//! partitions, allocate compute tiles, and respect SRAM/DRAM capacities.
//!
//! Within a partition compute, DRAM traffic and network fully overlap, so a
//! partition costs the max of the three; partitions run one after another.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::DataflowGraph;
use crate::mapmat::AssignmentMatrices;
use crate::milp::{self, lin_and, Backend, LinExpr, Model, SolveOptions, Status, VarId};
use crate::system::ChipSpec;

/// Tiling efficiency of a GEMM-like kernel on a grid of `tiles` tiles.
///
/// Tiles form the most square `a × b` grid (`a ≤ b`); the aggregate array is
/// `a·rows × b·cols` and padding to whole passes wastes the remainder.
pub fn utilization_model(gemm_dims: Option<(u64, u64, u64)>, tiles: u64, tile_shape: (u64, u64)) -> f64 {
    let Some((m, _, n)) = gemm_dims else { return 1.0 };
    if m == 0 || n == 0 {
        return 1.0;
    }
    let tiles = tiles.max(1);
    let a = (1..=tiles).take_while(|d| d * d <= tiles).filter(|d| tiles % d == 0).last().unwrap_or(1);
    let b = tiles / a;
    let rows = a * tile_shape.0.max(1);
    let cols = b * tile_shape.1.max(1);
    let eff = |len: u64, span: u64| len as f64 / (len.div_ceil(span) * span) as f64;
    (eff(m, rows) * eff(n, cols)).clamp(f64::MIN_POSITIVE, 1.0)
}

/// The `size` largest distinct tile counts t_lim, t_lim/2, t_lim/4, ...
pub fn tile_menu(t_lim: u64, size: usize) -> Vec<u64> {
    let mut menu = Vec::new();
    let mut t = t_lim;
    while t >= 1 && menu.len() < size.max(1) {
        menu.push(t);
        t /= 2;
    }
    menu
}

/// The per-chip workload handed to this level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChipWorkload {
    /// Kernels carry per-chip FLOP (f′), tensors per-chip bytes (b′), and
    /// `weight_bytes` the per-chip resident parameters.
    pub graph: DataflowGraph,
    /// Network seconds each kernel inherits from the inter-chip level.
    pub net: Vec<f64>,
    /// Multiplier on DRAM traffic (2 when the backward pass mirrors it).
    pub traffic_scale: f64,
    /// Stage each partition's weights into SRAM while it runs, which
    /// occupies SRAM and reads the weights from DRAM once per pass.
    #[serde(default)]
    pub weights_on_chip: bool,
}

impl ChipWorkload {
    pub fn new(graph: DataflowGraph) -> Self {
        let n = graph.n();
        ChipWorkload { graph, net: vec![0.0; n], traffic_scale: 1.0, weights_on_chip: false }
    }

    pub fn resident_weights(&self) -> f64 {
        self.graph.kernels.iter().map(|k| k.weight_bytes).sum()
    }

    /// Weight bytes kernel `k` stages on chip, zero unless `weights_on_chip`.
    pub fn staged_weights(&self, k: usize) -> f64 {
        if self.weights_on_chip {
            self.graph.kernels[k].weight_bytes
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone)]
pub struct IntrachipOptions {
    /// Number of partitions; defaults to the kernel count.
    pub p_max: Option<usize>,
    pub menu_size: usize,
    /// Copied onto stage workloads built by the full pipeline.
    pub weights_on_chip: bool,
    pub solve: SolveOptions,
    pub backend: Backend,
}

impl Default for IntrachipOptions {
    fn default() -> Self {
        IntrachipOptions { p_max: None, menu_size: 4, weights_on_chip: false, solve: SolveOptions::default(), backend: Backend::Builtin }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntraChipMapping {
    pub p_max: usize,
    pub partitions: Vec<usize>,
    pub tiles: Vec<u64>,
    pub util: Vec<f64>,
    pub t_comp: Vec<f64>,
    pub t_mem: Vec<f64>,
    pub t_net: Vec<f64>,
    pub t_cri: Vec<f64>,
    pub sram_used: Vec<f64>,
    pub dram_used: Vec<f64>,
    /// Σ t_cri.
    pub objective: f64,
    pub optimal: bool,
}

impl IntraChipMapping {
    pub fn used_partitions(&self) -> usize {
        self.partitions.iter().copied().max().map_or(0, |p| p + 1)
    }
}

fn kernel_time(w: &ChipWorkload, chip: &ChipSpec, k: usize, tiles: u64) -> f64 {
    let kern = &w.graph.kernels[k];
    if kern.flop == 0.0 {
        return 0.0;
    }
    let u = utilization_model(kern.gemm_dims, tiles, chip.tile_shape);
    kern.flop / (tiles as f64 * chip.t_flop * u)
}

/// Stage times of fixed partitions and tile counts.
pub fn evaluate_intrachip(
    w: &ChipWorkload,
    chip: &ChipSpec,
    partitions: &[usize],
    tiles: &[u64],
    p_max: usize,
) -> Result<IntraChipMapping> {
    let g = &w.graph;
    if partitions.len() != g.n() || tiles.len() != g.n() {
        return Err(Error::Validation("mapping must give a partition and tile count for every kernel".into()));
    }
    let mats = AssignmentMatrices::from_partitions(partitions, p_max, &g.tensors)?;
    let mut used_tiles = vec![0u64; p_max];
    let mut t_comp = vec![0.0f64; p_max];
    let mut t_net = vec![0.0; p_max];
    let mut util = Vec::with_capacity(g.n());
    for k in 0..g.n() {
        let i = partitions[k];
        if tiles[k] == 0 {
            return Err(Error::Validation(format!("kernel {} has no tiles", g.kernels[k].name)));
        }
        used_tiles[i] += tiles[k];
        util.push(utilization_model(g.kernels[k].gemm_dims, tiles[k], chip.tile_shape));
        t_comp[i] = t_comp[i].max(kernel_time(w, chip, k, tiles[k]));
        t_net[i] += w.net[k];
    }
    for (i, &u) in used_tiles.iter().enumerate() {
        if u > chip.t_lim {
            return Err(Error::Validation(format!("tile limit: partition {i} uses {u} of {} tiles", chip.t_lim)));
        }
    }
    let bytes: Vec<f64> = g.tensors.iter().map(|t| t.bytes).collect();
    let mut sram_used = AssignmentMatrices::aggregate(&mats.b, &bytes, p_max);
    let mut staged = vec![0.0; p_max];
    for k in 0..g.n() {
        staged[partitions[k]] += w.staged_weights(k);
    }
    for (s, &x) in sram_used.iter_mut().zip(&staged) {
        *s += x;
    }
    let weights = w.resident_weights();
    let dram_used: Vec<f64> = AssignmentMatrices::aggregate(&mats.l, &bytes, p_max).into_iter().map(|x| x + weights).collect();
    for i in 0..p_max {
        if sram_used[i] > chip.s_cap * (1.0 + 1e-12) {
            return Err(Error::Validation(format!("SRAM capacity: partition {i} holds {} of {} bytes", sram_used[i], chip.s_cap)));
        }
        if dram_used[i] > chip.d_cap * (1.0 + 1e-12) {
            return Err(Error::Validation(format!("DRAM capacity: partition {i} holds {} of {} bytes", dram_used[i], chip.d_cap)));
        }
    }
    let t_mem: Vec<f64> = AssignmentMatrices::aggregate(&mats.d, &bytes, p_max)
        .into_iter()
        .zip(&staged)
        .map(|(b, &x)| w.traffic_scale * (b + x) / chip.d_bw)
        .collect();
    let t_cri: Vec<f64> = (0..p_max).map(|i| t_comp[i].max(t_mem[i]).max(t_net[i])).collect();
    let objective = t_cri.iter().sum();
    Ok(IntraChipMapping {
        p_max,
        partitions: partitions.to_vec(),
        tiles: tiles.to_vec(),
        util,
        t_comp,
        t_mem,
        t_net,
        t_cri,
        sram_used,
        dram_used,
        objective,
        optimal: false,
    })
}

pub struct IntrachipProblem {
    pub model: Model,
    pub menu: Vec<u64>,
    pub p_max: usize,
    /// w[k][i][e]: kernel k in partition i with menu entry e.
    pub w: Vec<Vec<Vec<VarId>>>,
}

pub fn build_intrachip(w: &ChipWorkload, chip: &ChipSpec, opts: &IntrachipOptions) -> Result<IntrachipProblem> {
    let g = &w.graph;
    g.validate_structure()?;
    chip.validate()?;
    if w.net.len() != g.n() {
        return Err(Error::Validation("one network term per kernel required".into()));
    }
    let n = g.n();
    let p = opts.p_max.unwrap_or(n).max(1);
    let menu = tile_menu(chip.t_lim, opts.menu_size);
    let weights = w.resident_weights();
    if weights > chip.d_cap {
        return Err(Error::Infeasible(format!("DRAM capacity: resident weights {weights} exceed {} bytes", chip.d_cap)));
    }
    for t in &g.tensors {
        if t.bytes > chip.s_cap && t.bytes + weights > chip.d_cap {
            return Err(Error::Infeasible(format!(
                "tensor {} ({} bytes) fits neither in SRAM nor in DRAM beside the weights",
                t.id, t.bytes
            )));
        }
    }

    let mut m = Model::new();
    let x: Vec<Vec<Vec<VarId>>> = (0..n)
        .map(|k| (0..p).map(|i| (0..menu.len()).map(|e| m.bool_var(format!("w_{k}_{i}_{e}"))).collect()).collect())
        .collect();
    for k in g.topological_order()? {
        let members: Vec<VarId> = x[k].iter().flatten().copied().collect();
        m.decision(format!("place_{k}"), &members);
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

    let time: Vec<Vec<f64>> = (0..n).map(|k| menu.iter().map(|&t| kernel_time(w, chip, k, t)).collect()).collect();
    let fused_floor: Vec<f64> = g.kernels.iter().map(|k| k.flop / chip.peak_flops()).collect();

    let z = m.cont_var("z", 0.0, f64::INFINITY);
    let mut total = LinExpr::from(z);
    let mut comp_sum = LinExpr::from(z);
    for i in 0..p {
        let mut tiles = LinExpr::new();
        for k in 0..n {
            for (e, &t) in menu.iter().enumerate() {
                tiles.push(x[k][i][e], t as f64);
            }
        }
        m.le(format!("tiles_{i}"), tiles, chip.t_lim as f64);

        let comp = m.cont_var(format!("t_comp_{i}"), 0.0, f64::INFINITY);
        let mem = m.cont_var(format!("t_mem_{i}"), 0.0, f64::INFINITY);
        let net = m.cont_var(format!("t_net_{i}"), 0.0, f64::INFINITY);
        let cri = m.cont_var(format!("t_cri_{i}"), 0.0, f64::INFINITY);
        let mut floor = LinExpr::from(comp);
        let mut en = LinExpr::from(net);
        for k in 0..n {
            let mut ek = LinExpr::from(comp);
            for e in 0..menu.len() {
                ek.push(x[k][i][e], -time[k][e]);
            }
            m.ge(format!("t_comp_{i}_{k}"), ek, 0.0);
            floor.push(a[k][i], -fused_floor[k]);
            en.push(a[k][i], -w.net[k]);
        }
        // Tiles are shared, so a partition is never faster than its total
        // work on the whole chip.
        m.ge(format!("t_comp_floor_{i}"), floor, 0.0);
        m.ge(format!("t_net_{i}"), en, 0.0);

        let mut sram = LinExpr::new();
        let mut dram = LinExpr::new();
        let mut em = LinExpr::from(mem);
        for k in 0..n {
            let x = w.staged_weights(k);
            if x > 0.0 {
                sram.push(a[k][i], x);
                em.push(a[k][i], -w.traffic_scale * x / chip.d_bw);
            }
        }
        for t in &g.tensors {
            let b = lin_and(&mut m, a[t.src][i], a[t.dst][i]);
            sram.push(b, t.bytes);
            // D = A_src + A_dst − 2B; L = [src ≤ i] − [dst < i] − B.
            em.push(a[t.src][i], -w.traffic_scale * t.bytes / chip.d_bw);
            em.push(a[t.dst][i], -w.traffic_scale * t.bytes / chip.d_bw);
            em.push(b, 2.0 * w.traffic_scale * t.bytes / chip.d_bw);
            let l = m.bool_var(format!("L_{}_{i}", t.id));
            let mut def = LinExpr::from(l).term(b, 1.0);
            for i2 in 0..=i {
                def.push(a[t.src][i2], -1.0);
            }
            for i2 in 0..i {
                def.push(a[t.dst][i2], 1.0);
            }
            m.eq("L_def", def, 0.0);
            dram.push(l, t.bytes);
        }
        m.le(format!("sram_{i}"), sram, chip.s_cap);
        m.le(format!("dram_{i}"), dram, chip.d_cap - weights);
        m.ge(format!("t_mem_{i}"), em, 0.0);
        for term in [comp, mem, net] {
            m.ge(format!("t_cri_{i}"), LinExpr::from(cri).term(term, -1.0), 0.0);
        }
        total.push(cri, -1.0);
        comp_sum.push(comp, -1.0);
    }
    m.ge("objective", total, 0.0);
    m.ge("objective_comp", comp_sum, 0.0);
    m.ge("objective_net", LinExpr::from(z), w.net.iter().sum());
    m.minimize(z.into());
    Ok(IntrachipProblem { model: m, menu, p_max: p, w: x })
}

fn extract(prob: &IntrachipProblem, sol: &milp::Solution, n: usize) -> (Vec<usize>, Vec<u64>) {
    let mut parts = vec![0; n];
    let mut tiles = vec![prob.menu[0]; n];
    for k in 0..n {
        for i in 0..prob.p_max {
            for (e, &v) in prob.w[k][i].iter().enumerate() {
                if sol.is_set(v) {
                    parts[k] = i;
                    tiles[k] = prob.menu[e];
                }
            }
        }
    }
    (parts, tiles)
}

fn run(w: &ChipWorkload, chip: &ChipSpec, prob: IntrachipProblem, opts: &IntrachipOptions) -> Result<IntraChipMapping> {
    let sol = milp::solve(&prob.model, &opts.backend, &opts.solve)?;
    match sol.status {
        Status::Infeasible => {
            return Err(Error::Infeasible("intra-chip SRAM/DRAM capacity or tile constraints admit no mapping".into()))
        }
        Status::Timeout if !sol.has_incumbent() => return Err(Error::Timeout),
        _ => {}
    }
    let (parts, tiles) = extract(&prob, &sol, w.graph.n());
    let mut mapping = evaluate_intrachip(w, chip, &parts, &tiles, prob.p_max)?;
    mapping.optimal = sol.status == Status::Optimal;
    Ok(mapping)
}

pub fn solve_intrachip(w: &ChipWorkload, chip: &ChipSpec, opts: &IntrachipOptions) -> Result<IntraChipMapping> {
    let prob = build_intrachip(w, chip, opts)?;
    let mut opts = opts.clone();
    if opts.solve.hint.is_none() {
        if let Some((parts, tiles)) = contiguous_heuristic(w, chip, prob.p_max, &prob.menu)? {
            opts.solve.hint = Some(hint_values(&prob, &parts, &tiles));
        }
    }
    run(w, chip, prob, &opts)
}

/// Best contiguous mapping over the earliest-first and latest-first
/// topological orders.
pub fn contiguous_heuristic(w: &ChipWorkload, chip: &ChipSpec, p_max: usize, menu: &[u64]) -> Result<Option<(Vec<usize>, Vec<u64>)>> {
    let g = &w.graph;
    let early = g.topological_order()?;
    let mut late = crate::graph::topo_sort(g.n(), g.tensors.iter().map(|t| (t.dst, t.src))).map_err(|_| {
        Error::Validation("cycle in workload graph".into())
    })?;
    late.reverse();
    let mut best: Option<(f64, Vec<usize>, Vec<u64>)> = None;
    for order in [early, late] {
        if let Some((parts, tiles)) = contiguous_mapping(w, chip, &order, p_max, menu) {
            let obj = evaluate_intrachip(w, chip, &parts, &tiles, p_max)?.objective;
            if best.as_ref().is_none_or(|b| obj < b.0) {
                best = Some((obj, parts, tiles));
            }
        }
    }
    Ok(best.map(|(_, p, t)| (p, t)))
}

/// Full variable vector for fixed partitions and tiles.
fn hint_values(prob: &IntrachipProblem, parts: &[usize], tiles: &[u64]) -> Vec<f64> {
    let mut m = prob.model.clone();
    for (k, per_part) in prob.w.iter().enumerate() {
        for (i, vars) in per_part.iter().enumerate() {
            for (e, &v) in vars.iter().enumerate() {
                let on = (parts[k] == i && tiles[k] == prob.menu[e]) as u8 as f64;
                m.vars[v.0].lb = on;
                m.vars[v.0].ub = on;
            }
        }
    }
    milp::solve_builtin(&m, &SolveOptions::default()).map(|s| s.values).unwrap_or_default()
}

/// Smallest-makespan tile counts from `menu` for kernels sharing one
/// partition, or `None` if they cannot all get a tile.
pub fn allocate_tiles(w: &ChipWorkload, chip: &ChipSpec, members: &[usize], menu: &[u64]) -> Option<Vec<u64>> {
    if members.is_empty() {
        return Some(Vec::new());
    }
    let times: Vec<Vec<f64>> = members.iter().map(|&k| menu.iter().map(|&t| kernel_time(w, chip, k, t)).collect()).collect();
    let fit = |tau: f64| -> Option<Vec<u64>> {
        let mut used = 0;
        let mut out = Vec::with_capacity(members.len());
        for row in &times {
            let t = menu.iter().zip(row).filter(|&(_, &x)| x <= tau).map(|(&t, _)| t).min()?;
            used += t;
            out.push(t);
        }
        (used <= chip.t_lim).then_some(out)
    };
    let mut taus: Vec<f64> = times.iter().flatten().copied().collect();
    taus.sort_by(f64::total_cmp);
    taus.dedup();
    // Feasibility is monotone in the makespan, so bisect on the candidates.
    let (mut lo, mut hi) = (0, taus.len());
    while lo < hi {
        let mid = (lo + hi) / 2;
        if fit(taus[mid]).is_some() {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    taus.get(lo).and_then(|&tau| fit(tau))
}

/// Best mapping whose partitions are contiguous runs of `order`, by dynamic
/// programming over segment boundaries.
pub fn contiguous_mapping(w: &ChipWorkload, chip: &ChipSpec, order: &[usize], p_max: usize, menu: &[u64]) -> Option<(Vec<usize>, Vec<u64>)> {
    let g = &w.graph;
    let n = order.len();
    let mut pos = vec![0; g.n()];
    for (i, &k) in order.iter().enumerate() {
        pos[k] = i;
    }
    let weights = w.resident_weights();
    let segment = |a: usize, b: usize| -> Option<(f64, Vec<u64>)> {
        let tiles = allocate_tiles(w, chip, &order[a..b], menu)?;
        let comp = order[a..b].iter().zip(&tiles).map(|(&k, &t)| kernel_time(w, chip, k, t)).fold(0.0, f64::max);
        let net: f64 = order[a..b].iter().map(|&k| w.net[k]).sum();
        let staged: f64 = order[a..b].iter().map(|&k| w.staged_weights(k)).sum();
        let (mut sram, mut traffic, mut dram) = (staged, staged, weights);
        for t in &g.tensors {
            let (s, d) = (pos[t.src], pos[t.dst]);
            let (si, di) = ((a..b).contains(&s), (a..b).contains(&d));
            if si && di {
                sram += t.bytes;
            } else {
                if si || di {
                    traffic += t.bytes;
                }
                if s < b && d >= a {
                    dram += t.bytes;
                }
            }
        }
        if sram > chip.s_cap || dram > chip.d_cap {
            return None;
        }
        let mem = w.traffic_scale * traffic / chip.d_bw;
        Some((comp.max(mem).max(net), tiles))
    };
    // best[c][b]: cost of covering order[..b] with c segments.
    let p = p_max.min(n).max(1);
    let mut best = vec![vec![f64::INFINITY; n + 1]; p + 1];
    let mut from = vec![vec![usize::MAX; n + 1]; p + 1];
    best[0][0] = 0.0;
    let mut cache: Vec<Vec<Option<Option<(f64, Vec<u64>)>>>> = vec![vec![None; n + 1]; n + 1];
    for c in 1..=p {
        for b in 1..=n {
            for a in 0..b {
                if !best[c - 1][a].is_finite() {
                    continue;
                }
                let seg = cache[a][b].get_or_insert_with(|| segment(a, b));
                if let Some((cost, _)) = seg {
                    let v = best[c - 1][a] + *cost;
                    if v < best[c][b] {
                        best[c][b] = v;
                        from[c][b] = a;
                    }
                }
            }
        }
    }
    let c_best = (1..=p).filter(|&c| best[c][n].is_finite()).min_by(|&x, &y| best[x][n].total_cmp(&best[y][n]))?;
    let mut parts = vec![0; g.n()];
    let mut tiles = vec![0; g.n()];
    let (mut c, mut b) = (c_best, n);
    while c > 0 {
        let a = from[c][b];
        let (_, seg_tiles) = cache[a][b].clone().flatten()?;
        for (j, &k) in order[a..b].iter().enumerate() {
            parts[k] = c - 1;
            tiles[k] = seg_tiles[j];
        }
        b = a;
        c -= 1;
    }
    Some((parts, tiles))
}

/// Optimal tile allocation for fixed partitions. Partitions only interact
/// through their own tile budget, so each is solved exactly on its own.
pub fn solve_tiles(w: &ChipWorkload, chip: &ChipSpec, partitions: &[usize], p_max: usize, opts: &IntrachipOptions) -> Result<IntraChipMapping> {
    if partitions.len() != w.graph.n() {
        return Err(Error::Validation("one partition per kernel required".into()));
    }
    AssignmentMatrices::from_partitions(partitions, p_max, &w.graph.tensors)?;
    let menu = tile_menu(chip.t_lim, opts.menu_size);
    let mut tiles = vec![0; w.graph.n()];
    for i in 0..p_max {
        let members: Vec<usize> = (0..w.graph.n()).filter(|&k| partitions[k] == i).collect();
        let alloc = allocate_tiles(w, chip, &members, &menu)
            .ok_or_else(|| Error::Infeasible(format!("tile limit: partition {i} has more kernels than tiles")))?;
        for (&k, t) in members.iter().zip(alloc) {
            tiles[k] = t;
        }
    }
    let mut m = evaluate_intrachip(w, chip, partitions, &tiles, p_max).map_err(|e| match e {
        Error::Validation(msg) => Error::Infeasible(msg),
        other => other,
    })?;
    m.optimal = true;
    Ok(m)
}

/// The MILP restricted to fixed partitions; cross-checks [`solve_tiles`].
pub fn solve_tiles_milp(
    w: &ChipWorkload,
    chip: &ChipSpec,
    partitions: &[usize],
    p_max: usize,
    opts: &IntrachipOptions,
) -> Result<IntraChipMapping> {
    if partitions.len() != w.graph.n() {
        return Err(Error::Validation("one partition per kernel required".into()));
    }
    AssignmentMatrices::from_partitions(partitions, p_max, &w.graph.tensors)?;
    let opts = IntrachipOptions { p_max: Some(p_max), ..opts.clone() };
    let mut prob = build_intrachip(w, chip, &opts)?;
    // Drop the empty-prefix rule: a fixed assignment may leave gaps.
    prob.model.constraints.retain(|c| !c.name.starts_with("stage_prefix_"));
    for (k, &pk) in partitions.iter().enumerate() {
        for i in 0..p_max {
            if i != pk {
                for &v in &prob.w[k][i] {
                    prob.model.vars[v.0].ub = 0.0;
                }
            }
        }
    }
    run(w, chip, prob, &opts)
}

/// Kernel-by-kernel execution: one kernel per partition in topological
/// order, every tensor round-tripping through DRAM.
pub fn non_dataflow(w: &ChipWorkload, chip: &ChipSpec, opts: &IntrachipOptions) -> Result<IntraChipMapping> {
    let order = w.graph.topological_order()?;
    let mut parts = vec![0; w.graph.n()];
    for (i, &k) in order.iter().enumerate() {
        parts[k] = i;
    }
    solve_tiles(w, chip, &parts, w.graph.n().max(1), opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Kernel, KernelKind, Tensor};

    fn chip(t_lim: u64, s_cap: f64) -> ChipSpec {
        ChipSpec {
            name: "toy".into(),
            t_lim,
            t_flop: 1.0,
            s_cap,
            d_cap: 1e12,
            d_bw: 1.0,
            tile_shape: (1, 1),
            power_w: None,
            price_usd: None,
        }
    }

    fn chain(flops: &[f64], bytes: f64) -> ChipWorkload {
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
                output_bytes: bytes,
            })
            .collect();
        let tensors = (1..flops.len()).map(|i| Tensor { id: i - 1, src: i - 1, dst: i, bytes }).collect();
        ChipWorkload::new(DataflowGraph { name: "chain".into(), kernels, tensors, element_size: 2.0 })
    }

    #[test]
    fn utilization_examples() {
        assert_eq!(utilization_model(Some((128, 8, 128)), 4, (64, 64)), 1.0);
        let u = utilization_model(Some((65, 1, 64)), 1, (64, 64));
        assert!((u - 65.0 / 128.0).abs() < 1e-12);
        assert_eq!(utilization_model(None, 3, (8, 8)), 1.0);
        let big = Some((1u64 << 40, 1, 1u64 << 40));
        assert!((utilization_model(big, 8, (32, 32)) - utilization_model(big, 16, (32, 32))).abs() < 1e-9);
    }

    #[test]
    fn menu_halves() {
        assert_eq!(tile_menu(640, 4), vec![640, 320, 160, 80]);
        assert_eq!(tile_menu(2, 4), vec![2, 1]);
    }

    #[test]
    fn fused_chain_has_no_dram_traffic() {
        // Work proportional to a feasible tile split, so fusing costs nothing.
        let w = chain(&[2.0, 1.0, 1.0], 1.0);
        let m = solve_intrachip(&w, &chip(4, 100.0), &IntrachipOptions::default()).unwrap();
        assert_eq!(m.used_partitions(), 1);
        assert!(m.t_mem.iter().all(|&x| x == 0.0));
        let kbk = non_dataflow(&w, &chip(4, 100.0), &IntrachipOptions::default()).unwrap();
        assert!(kbk.t_mem.iter().filter(|&&x| x > 0.0).count() >= 2);
        assert!(m.objective <= kbk.objective);
    }

    #[test]
    fn single_kernel_gets_all_tiles() {
        let w = chain(&[8.0], 1.0);
        let m = evaluate_intrachip(&w, &chip(4, 10.0), &[0], &[4], 1).unwrap();
        assert_eq!(m.t_comp[0], 2.0);
    }

    #[test]
    fn tight_sram_splits() {
        let w = chain(&[4.0, 4.0, 4.0, 4.0], 3.0);
        let opts = IntrachipOptions { p_max: Some(2), ..Default::default() };
        let m = solve_intrachip(&w, &chip(4, 3.0), &opts).unwrap();
        for i in 0..2 {
            assert!(m.sram_used[i] <= 3.0);
        }
    }

    #[test]
    fn zero_flop_objective_zero() {
        let w = chain(&[0.0, 0.0], 1e-30);
        let m = solve_intrachip(&w, &chip(2, 1.0), &IntrachipOptions::default()).unwrap();
        assert!(m.objective < 1e-20);
    }

    #[test]
    fn combinatorial_tiles_match_milp() {
        let w = chain(&[3.0, 1.0, 2.0, 5.0], 1.0);
        let c = chip(8, 100.0);
        for parts in [vec![0, 0, 0, 0], vec![0, 0, 1, 1], vec![0, 1, 1, 2], vec![0, 1, 2, 3]] {
            let p = parts.iter().max().unwrap() + 1;
            let fast = solve_tiles(&w, &c, &parts, p, &IntrachipOptions::default()).unwrap();
            let milp = solve_tiles_milp(&w, &c, &parts, p, &IntrachipOptions::default()).unwrap();
            assert!((fast.objective - milp.objective).abs() <= 1e-12 * milp.objective.max(1.0), "{parts:?}");
        }
    }

    #[test]
    fn contiguous_dp_is_feasible_and_bounds_milp() {
        let w = chain(&[4.0, 1.0, 4.0, 1.0, 2.0], 2.0);
        let c = chip(4, 3.0);
        let menu = tile_menu(4, 4);
        let order = w.graph.topological_order().unwrap();
        let (parts, tiles) = contiguous_mapping(&w, &c, &order, 5, &menu).unwrap();
        let dp = evaluate_intrachip(&w, &c, &parts, &tiles, 5).unwrap();
        let m = solve_intrachip(&w, &c, &IntrachipOptions::default()).unwrap();
        assert!(m.optimal);
        // On a chain every monotone assignment is contiguous.
        assert!((dp.objective - m.objective).abs() <= 1e-12 * m.objective);
    }

    #[test]
    fn over_capacity_rejected() {
        let w = chain(&[1.0, 1.0], 5.0);
        assert!(evaluate_intrachip(&w, &chip(4, 1.0), &[0, 0], &[2, 2], 1).unwrap_err().to_string().contains("SRAM"));
        assert!(evaluate_intrachip(&w, &chip(3, 10.0), &[0, 0], &[2, 2], 1).unwrap_err().to_string().contains("tile"));
    }

    #[test]
    fn staged_weights_occupy_sram_and_split_fusion() {
        let mut w = chain(&[2.0, 2.0], 1.0);
        for k in &mut w.graph.kernels {
            k.weight_bytes = 3.0;
        }
        let c = chip(4, 5.0);
        let fused = evaluate_intrachip(&w, &c, &[0, 0], &[2, 2], 1).unwrap();
        assert_eq!(fused.sram_used[0], 1.0);
        w.weights_on_chip = true;
        assert!(evaluate_intrachip(&w, &c, &[0, 0], &[2, 2], 1).unwrap_err().to_string().contains("SRAM"));
        let split = evaluate_intrachip(&w, &c, &[0, 1], &[4, 4], 2).unwrap();
        assert_eq!(split.sram_used, vec![3.0, 3.0]);
        assert_eq!(split.t_mem, vec![4.0, 4.0]);
        let m = solve_intrachip(&w, &c, &IntrachipOptions::default()).unwrap();
        assert!(m.optimal);
        assert!((m.objective - split.objective).abs() < 1e-12);
    }
}
