//! Full mapping: the inter-chip level picks schemes and pipeline stages, then
//! every stage's sharded subgraph is handed to the intra-chip level.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{DataflowGraph, KernelRef};
use crate::interchip::{
    evaluate_with_costs, scheme_indices, solve_interchip, weight_scale, InterChipMapping, InterchipCosts, InterchipOptions,
};
use crate::intrachip::{evaluate_intrachip, solve_intrachip, solve_tiles, ChipWorkload, IntraChipMapping, IntrachipOptions};
use crate::system::{system_cost_power, SystemSpec, TechCatalog};

#[derive(Debug, Clone, Default)]
pub struct FullOptions {
    pub inter: InterchipOptions,
    pub intra: IntrachipOptions,
    /// Microbatches per iteration for the optional pipeline-bubble estimate.
    pub microbatches: Option<usize>,
}

/// One pipeline stage after both levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageMapping {
    /// Original kernel ids, in the order used by the intra-chip workload.
    pub kernels: Vec<usize>,
    pub intra: Option<IntraChipMapping>,
    pub t_p2p: f64,
    /// max(intra objective, point-to-point time).
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullMapping {
    pub inter: InterChipMapping,
    pub stages: Vec<StageMapping>,
    pub dp_time: f64,
    /// Slowest stage plus the data-parallel gradient reduction.
    pub iteration_time: f64,
    pub optimal: bool,
}

impl FullMapping {
    pub fn bottleneck_stage(&self) -> usize {
        (0..self.stages.len()).fold(0, |b, i| if self.stages[i].time > self.stages[b].time { i } else { b })
    }
}

/// The per-chip workload of one stage under the chosen schemes.
pub fn stage_workload(
    g: &DataflowGraph,
    costs: &InterchipCosts,
    scheme_index: &[usize],
    kernels: &[usize],
    opts: &InterchipOptions,
) -> ChipWorkload {
    let n_tp = costs.n_tp;
    let (mut sub, origin) = g.induced(kernels);
    let ff = opts.pass.flop_factor();
    for (local, &k) in kernels.iter().enumerate() {
        let s = costs.schemes[k][scheme_index[k]];
        let kern = &mut sub.kernels[local];
        kern.flop *= ff * s.flop_scale(n_tp);
        kern.gemm_dims = kern.gemm_dims.map(|d| s.shard_dims(d, n_tp));
        kern.weight_bytes *= weight_scale(s, n_tp);
        kern.output_bytes *= s.output_layout.share(n_tp);
    }
    for (t, &orig) in sub.tensors.iter_mut().zip(&origin) {
        let ot = &g.tensors[orig];
        let src = costs.schemes[ot.src][scheme_index[ot.src]];
        let dst = costs.schemes[ot.dst][scheme_index[ot.dst]];
        t.bytes *= src.output_layout.share(n_tp).max(dst.input_layout.share(n_tp));
    }
    let mut net: Vec<f64> = kernels.iter().map(|&k| costs.c[k][scheme_index[k]]).collect();
    let mut local = vec![usize::MAX; g.n()];
    for (i, &k) in kernels.iter().enumerate() {
        local[k] = i;
    }
    for (j, t) in g.tensors.iter().enumerate() {
        if local[t.src] != usize::MAX {
            net[local[t.src]] += costs.conv[j][scheme_index[t.src]][scheme_index[t.dst]];
        }
    }
    ChipWorkload { graph: sub, net, traffic_scale: opts.pass.comm_factor(), weights_on_chip: false }
}

/// Stage kernels in topological order.
fn ordered_stage_kernels(order: &[usize], partitions: &[usize], stage: usize) -> Vec<usize> {
    order.iter().copied().filter(|&k| partitions[k] == stage).collect()
}

fn assemble(inter: InterChipMapping, stages: Vec<StageMapping>) -> FullMapping {
    let slowest = stages.iter().map(|s| s.time).fold(0.0, f64::max);
    let optimal = inter.optimal && stages.iter().all(|s| s.intra.as_ref().is_none_or(|m| m.optimal));
    FullMapping { dp_time: inter.dp_time, iteration_time: slowest + inter.dp_time, inter, stages, optimal }
}

fn stage_mapping(kernels: Vec<usize>, intra: Option<IntraChipMapping>, t_p2p: f64) -> StageMapping {
    let time = intra.as_ref().map_or(0.0, |m| m.objective).max(t_p2p);
    StageMapping { kernels, intra, t_p2p, time }
}

/// Runs the inter-chip solver, then the intra-chip solver on every stage.
/// Solves both levels. The inter-chip level does not see memory capacity,
/// so when a stage has no feasible intra-chip mapping the inter-chip level
/// is solved again over sharded schemes only, which minimizes per-chip bytes.
pub fn optimize_full(g: &DataflowGraph, sys: &SystemSpec, opts: &FullOptions) -> Result<FullMapping> {
    match optimize_levels(g, g, sys, opts) {
        Err(e @ (Error::Infeasible(_) | Error::Timeout)) if sys.n_tp > 1 => match sharded_only(g) {
            Some(gs) => optimize_levels(g, &gs, sys, opts).map_err(|_| e),
            None => Err(e),
        },
        r => r,
    }
}

/// `g` with unsharded schemes dropped wherever a sharded one applies, or
/// None when nothing would change.
fn sharded_only(g: &DataflowGraph) -> Option<DataflowGraph> {
    let mut out = g.clone();
    let mut changed = false;
    for k in &mut out.kernels {
        let sharded: Vec<String> =
            k.scheme_ids.iter().filter(|id| crate::sharding::scheme(id).is_ok_and(|s| s.sharded)).cloned().collect();
        if !sharded.is_empty() && sharded.len() < k.scheme_ids.len() {
            k.scheme_ids = sharded;
            changed = true;
        }
    }
    changed.then_some(out)
}

fn optimize_levels(g: &DataflowGraph, search: &DataflowGraph, sys: &SystemSpec, opts: &FullOptions) -> Result<FullMapping> {
    let mut inter = solve_interchip(search, sys, &opts.inter)?;
    inter.scheme_index = scheme_indices(g, &inter.schemes)?;
    let costs = InterchipCosts::new(g, sys, &opts.inter)?;
    let order = g.topological_order()?;
    let mut stages = Vec::with_capacity(inter.p_max);
    for i in 0..inter.p_max {
        let kernels = ordered_stage_kernels(&order, &inter.partitions, i);
        let intra = if kernels.is_empty() {
            None
        } else {
            let mut w = stage_workload(g, &costs, &inter.scheme_index, &kernels, &opts.inter);
            w.weights_on_chip = opts.intra.weights_on_chip;
            let p_max = opts.intra.p_max.map_or(kernels.len(), |p| p.clamp(1, kernels.len()));
            let intra_opts = IntrachipOptions { p_max: Some(p_max), ..opts.intra.clone() };
            Some(solve_intrachip(&w, &sys.chip, &intra_opts)?)
        };
        stages.push(stage_mapping(kernels, intra, inter.t_p2p[i]));
    }
    Ok(assemble(inter, stages))
}

/// A complete fixed mapping, by kernel name or index.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MappingFile {
    /// Kernels of every pipeline stage.
    pub partitions: Vec<Vec<KernelRef>>,
    /// Scheme id per kernel name; may be omitted on a single TP chip.
    #[serde(default)]
    pub schemes: BTreeMap<String, String>,
    /// On-chip partitions of every stage, in execution order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intra: Option<Vec<Vec<Vec<KernelRef>>>>,
    /// Tile count per kernel name; solved optimally when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tiles: Option<BTreeMap<String, u64>>,
}

fn resolve(g: &DataflowGraph, r: &KernelRef) -> Result<usize> {
    match r {
        KernelRef::Index(i) if *i < g.n() => Ok(*i),
        KernelRef::Index(i) => Err(Error::Validation(format!("mapping references kernel index {i} out of range"))),
        KernelRef::Name(n) => g
            .kernel_by_name(n)
            .map(|k| k.id)
            .ok_or_else(|| Error::Validation(format!("mapping references unknown kernel `{n}`"))),
    }
}

/// Resolved per-kernel form of a [`MappingFile`].
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedMapping {
    pub partitions: Vec<usize>,
    pub p_max: usize,
    pub schemes: Vec<String>,
    /// On-chip partition of every kernel within its stage.
    pub intra: Option<Vec<usize>>,
    pub tiles: Option<Vec<u64>>,
}

fn assign(g: &DataflowGraph, groups: &[Vec<KernelRef>], what: &str) -> Result<Vec<Option<usize>>> {
    let mut out = vec![None; g.n()];
    for (i, group) in groups.iter().enumerate() {
        for r in group {
            let k = resolve(g, r)?;
            if out[k].replace(i).is_some() {
                return Err(Error::Validation(format!("kernel {} appears twice in the {what}", g.kernels[k].name)));
            }
        }
    }
    Ok(out)
}

impl MappingFile {
    pub fn resolve(&self, g: &DataflowGraph, sys: &SystemSpec) -> Result<ResolvedMapping> {
        let parts = assign(g, &self.partitions, "partitions")?;
        let partitions = parts
            .iter()
            .enumerate()
            .map(|(k, p)| p.ok_or_else(|| Error::Validation(format!("kernel {} is not mapped to any stage", g.kernels[k].name))))
            .collect::<Result<Vec<_>>>()?;
        if self.partitions.len() != sys.n_pp {
            return Err(Error::Validation(format!("{} stages given but the system has n_pp = {}", self.partitions.len(), sys.n_pp)));
        }
        for name in self.schemes.keys() {
            if g.kernel_by_name(name).is_none() {
                return Err(Error::Validation(format!("scheme given for unknown kernel `{name}`")));
            }
        }
        let schemes = g
            .kernels
            .iter()
            .map(|k| match self.schemes.get(&k.name) {
                Some(s) => Ok(s.clone()),
                None if sys.n_tp <= 1 => Ok(k.scheme_ids.first().cloned().unwrap_or_default()),
                None => Err(Error::Validation(format!("no scheme given for kernel {} with n_tp = {}", k.name, sys.n_tp))),
            })
            .collect::<Result<Vec<_>>>()?;
        let intra = match &self.intra {
            None => None,
            Some(stages) => {
                if stages.len() != self.partitions.len() {
                    return Err(Error::Validation("intra mapping must list every stage".into()));
                }
                let mut local = vec![usize::MAX; g.n()];
                for (i, groups) in stages.iter().enumerate() {
                    for (k, p) in assign(g, groups, "intra partitions")?.into_iter().enumerate() {
                        if let Some(p) = p {
                            if partitions[k] != i {
                                return Err(Error::Validation(format!(
                                    "kernel {} is on-chip mapped in stage {i} but runs in stage {}",
                                    g.kernels[k].name, partitions[k]
                                )));
                            }
                            local[k] = p;
                        }
                    }
                }
                if let Some(k) = local.iter().position(|&p| p == usize::MAX) {
                    return Err(Error::Validation(format!("kernel {} has no on-chip partition", g.kernels[k].name)));
                }
                Some(local)
            }
        };
        let tiles = match &self.tiles {
            None => None,
            Some(map) => Some(
                g.kernels
                    .iter()
                    .map(|k| map.get(&k.name).copied().ok_or_else(|| Error::Validation(format!("no tile count for kernel {}", k.name))))
                    .collect::<Result<Vec<_>>>()?,
            ),
        };
        Ok(ResolvedMapping { partitions, p_max: self.partitions.len(), schemes, intra, tiles })
    }

    /// The file form of a solved mapping.
    pub fn from_full(g: &DataflowGraph, m: &FullMapping) -> Self {
        let name = |k: usize| KernelRef::Name(g.kernels[k].name.clone());
        let partitions = (0..m.inter.p_max).map(|i| m.inter.stage_kernels(i).into_iter().map(name).collect()).collect();
        let schemes = g.kernels.iter().zip(&m.inter.schemes).map(|(k, s)| (k.name.clone(), s.clone())).collect();
        let mut tiles = BTreeMap::new();
        let intra = m
            .stages
            .iter()
            .map(|s| match &s.intra {
                None => Vec::new(),
                Some(im) => {
                    for (local, &k) in s.kernels.iter().enumerate() {
                        tiles.insert(g.kernels[k].name.clone(), im.tiles[local]);
                    }
                    (0..im.used_partitions())
                        .map(|p| s.kernels.iter().enumerate().filter(|&(l, _)| im.partitions[l] == p).map(|(_, &k)| name(k)).collect())
                        .collect()
                }
            })
            .collect();
        MappingFile { partitions, schemes, intra: Some(intra), tiles: Some(tiles) }
    }
}

pub fn parse_mapping(text: &str) -> Result<MappingFile> {
    serde_json::from_str(text).map_err(|e| Error::Parse { what: "mapping".into(), message: e.to_string() })
}

pub fn load_mapping(path: impl AsRef<Path>) -> Result<MappingFile> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_mapping(&text)
}

/// Evaluates a fixed mapping. Stages without on-chip partitions run one
/// kernel per partition; missing tile counts are allocated optimally.
pub fn evaluate_full(g: &DataflowGraph, sys: &SystemSpec, mapping: &MappingFile, opts: &FullOptions) -> Result<FullMapping> {
    let r = mapping.resolve(g, sys)?;
    let costs = InterchipCosts::new(g, sys, &opts.inter)?;
    let idx = scheme_indices(g, &r.schemes)?;
    let inter = evaluate_with_costs(g, sys, &costs, &r.partitions, &idx, &opts.inter)?;
    let order = g.topological_order()?;
    let mut stages = Vec::with_capacity(r.p_max);
    for i in 0..r.p_max {
        let kernels = ordered_stage_kernels(&order, &r.partitions, i);
        let intra = if kernels.is_empty() {
            None
        } else {
            let mut w = stage_workload(g, &costs, &idx, &kernels, &opts.inter);
            w.weights_on_chip = opts.intra.weights_on_chip;
            let local: Vec<usize> = match &r.intra {
                Some(p) => kernels.iter().map(|&k| p[k]).collect(),
                None => (0..kernels.len()).collect(),
            };
            let p_max = local.iter().copied().max().map_or(1, |p| p + 1);
            Some(match &r.tiles {
                Some(t) => {
                    let tiles: Vec<u64> = kernels.iter().map(|&k| t[k]).collect();
                    evaluate_intrachip(&w, &sys.chip, &local, &tiles, p_max)?
                }
                None => solve_tiles(&w, &sys.chip, &local, p_max, &opts.intra)?,
            })
        };
        stages.push(stage_mapping(kernels, intra, inter.t_p2p[i]));
    }
    let mut full = assemble(inter, stages);
    full.optimal = false;
    Ok(full)
}

/// Which resource bounds a span of time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Compute,
    Memory,
    Network,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Breakdown {
    pub compute: f64,
    pub memory: f64,
    pub network: f64,
}

impl Breakdown {
    pub fn dominant(&self) -> Regime {
        if self.compute >= self.memory && self.compute >= self.network {
            Regime::Compute
        } else if self.memory >= self.network {
            Regime::Memory
        } else {
            Regime::Network
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerfReport {
    /// Useful FLOP/s of the whole system.
    pub throughput: f64,
    /// throughput ÷ (chips · peak).
    pub utilization: f64,
    /// Fractions of the iteration time attributed to each resource.
    pub breakdown: Breakdown,
    pub regime: Regime,
    pub cost_eff: Option<f64>,
    pub power_eff: Option<f64>,
    /// Useful FLOP per chip per byte of DRAM traffic.
    #[serde(with = "unbounded")]
    pub oi_mem: f64,
    /// Useful FLOP per chip per byte over the slowest link.
    #[serde(with = "unbounded")]
    pub oi_net: f64,
    /// Compute roof this mapping attains on one chip (≤ peak).
    pub compute_roof: f64,
    pub peak_flops: f64,
    #[serde(with = "unbounded")]
    pub d_bw: f64,
    #[serde(with = "unbounded")]
    pub n_bw: f64,
    pub iteration_time: f64,
    pub stage_times: Vec<f64>,
    pub dp_time: f64,
    /// Iteration time with a GPipe-style fill/drain bubble, when requested.
    pub bubbled_time: Option<f64>,
    pub n_tp: usize,
    pub n_pp: usize,
    pub n_dp: usize,
}

/// Infinite values round-trip through JSON as `null`.
mod unbounded {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// Per-resource seconds of the bottleneck stage, tagged with the regime
/// that wins each partition.
fn attribute(m: &FullMapping) -> ([f64; 3], [f64; 3]) {
    let mut by_regime = [0.0; 3];
    let mut raw = [0.0; 3];
    if let Some(stage) = m.stages.get(m.bottleneck_stage()) {
        let intra_obj = stage.intra.as_ref().map_or(0.0, |im| im.objective);
        if let Some(im) = &stage.intra {
            raw[0] = im.t_comp.iter().sum();
            raw[1] = im.t_mem.iter().sum();
            raw[2] = im.t_net.iter().sum();
        }
        raw[2] = raw[2].max(stage.t_p2p);
        if stage.t_p2p > intra_obj {
            by_regime[2] += stage.t_p2p;
        } else if let Some(im) = &stage.intra {
            for p in 0..im.p_max {
                let (c, mm, n) = (im.t_comp[p], im.t_mem[p], im.t_net[p]);
                let slot = if c >= mm && c >= n {
                    0
                } else if mm >= n {
                    1
                } else {
                    2
                };
                by_regime[slot] += im.t_cri[p];
            }
        }
    }
    by_regime[2] += m.dp_time;
    raw[2] += m.dp_time;
    (by_regime, raw)
}

fn intensity(flop: f64, bw: f64, seconds: f64) -> f64 {
    if !bw.is_finite() || seconds <= 0.0 {
        f64::INFINITY
    } else {
        flop / (bw * seconds)
    }
}

pub fn perf_report(g: &DataflowGraph, sys: &SystemSpec, m: &FullMapping, catalog: Option<&TechCatalog>, opts: &FullOptions) -> Result<PerfReport> {
    let t = m.iteration_time;
    if !(t > 0.0) {
        return Err(Error::Validation("iteration time must be positive".into()));
    }
    let chips = sys.total_chips() as f64;
    let peak = sys.chip.peak_flops();
    let iter_flop = opts.inter.pass.flop_factor() * g.total_flop();
    let throughput = sys.n_dp as f64 * iter_flop / t;
    let per_chip = throughput * t / chips;
    let (by_regime, raw) = attribute(m);
    let total: f64 = by_regime.iter().sum();
    let breakdown = Breakdown { compute: by_regime[0] / total, memory: by_regime[1] / total, network: by_regime[2] / total };
    let regime = breakdown.dominant();
    let pick = |r: Regime, own: f64| if regime == r { t } else { own };
    let n_bw = sys.min_link_bw();
    let (cost_eff, power_eff) = match catalog.map(|c| system_cost_power(sys, c)) {
        Some(Ok(cp)) => (Some(throughput / cp.price_usd), Some(throughput / cp.power_w)),
        Some(Err(Error::MissingCatalogEntry(_))) | None => (None, None),
        Some(Err(e)) => return Err(e),
    };
    let bubbled_time = opts.microbatches.map(|mu| {
        let mu = mu.max(1) as f64;
        (t - m.dp_time) * (mu + sys.n_pp as f64 - 1.0) / mu + m.dp_time
    });
    Ok(PerfReport {
        throughput,
        utilization: throughput / (chips * peak),
        breakdown,
        regime,
        cost_eff,
        power_eff,
        oi_mem: intensity(per_chip, sys.chip.d_bw, pick(Regime::Memory, raw[1])),
        oi_net: intensity(per_chip, n_bw, pick(Regime::Network, raw[2])),
        compute_roof: per_chip / pick(Regime::Compute, raw[0]).max(per_chip / peak),
        peak_flops: peak,
        d_bw: sys.chip.d_bw,
        n_bw,
        iteration_time: t,
        stage_times: m.stages.iter().map(|s| s.time).collect(),
        dp_time: m.dp_time,
        bubbled_time,
        n_tp: sys.n_tp,
        n_pp: sys.n_pp,
        n_dp: sys.n_dp,
    })
}

/// Attainable throughput under three roofs and which one binds.
pub fn roofline_bound(compute_roof: f64, oi_mem: f64, d_bw: f64, oi_net: f64, n_bw: f64) -> (f64, Regime) {
    let roof = |oi: f64, bw: f64| if oi.is_infinite() || bw.is_infinite() { f64::INFINITY } else { oi * bw };
    let mem = roof(oi_mem, d_bw);
    let net = roof(oi_net, n_bw);
    if compute_roof <= mem && compute_roof <= net {
        (compute_roof, Regime::Compute)
    } else if mem <= net {
        (mem, Regime::Memory)
    } else {
        (net, Regime::Network)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RooflineRecord {
    /// Per-chip attained FLOP/s.
    pub achieved: f64,
    pub peak: f64,
    pub compute_roof: f64,
    #[serde(with = "unbounded")]
    pub memory_roof: f64,
    #[serde(with = "unbounded")]
    pub network_roof: f64,
    #[serde(with = "unbounded")]
    pub oi_mem: f64,
    #[serde(with = "unbounded")]
    pub oi_net: f64,
    pub regime: Regime,
}

/// Places a report on the hierarchical roofline and checks that the min of
/// the roofs reproduces the modeled per-chip throughput.
pub fn roofline(r: &PerfReport) -> Result<RooflineRecord> {
    let chips = (r.n_tp * r.n_pp * r.n_dp) as f64;
    let achieved = r.throughput / chips;
    let (bound, regime) = roofline_bound(r.compute_roof, r.oi_mem, r.d_bw, r.oi_net, r.n_bw);
    if (bound - achieved).abs() > 1e-6 * achieved {
        return Err(Error::Roofline(format!("roofs give {bound} FLOP/s but the model achieves {achieved}")));
    }
    if r.compute_roof > r.peak_flops * (1.0 + 1e-9) {
        return Err(Error::Roofline(format!("compute roof {} exceeds peak {}", r.compute_roof, r.peak_flops)));
    }
    let roof = |oi: f64, bw: f64| if oi.is_infinite() || bw.is_infinite() { f64::INFINITY } else { oi * bw };
    Ok(RooflineRecord {
        achieved,
        peak: r.peak_flops,
        compute_roof: r.compute_roof,
        memory_roof: roof(r.oi_mem, r.d_bw),
        network_roof: roof(r.oi_net, r.n_bw),
        oi_mem: r.oi_mem,
        oi_net: r.oi_net,
        regime,
    })
}

fn secs(x: f64) -> String {
    if x >= 1.0 {
        format!("{x:.3} s")
    } else if x >= 1e-3 {
        format!("{:.3} ms", x * 1e3)
    } else {
        format!("{:.3} us", x * 1e6)
    }
}

/// Human-readable report: per-stage and per-partition times with labels.
pub fn render_text(g: &DataflowGraph, m: &FullMapping, r: &PerfReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "workload {} on {} chips (tp {} pp {} dp {})", g.name, r.n_tp * r.n_pp * r.n_dp, r.n_tp, r.n_pp, r.n_dp);
    let b = m.bottleneck_stage();
    for (i, st) in m.stages.iter().enumerate() {
        let mark = if i == b { " <- bottleneck" } else { "" };
        let _ = writeln!(s, "stage {i}: {} (p2p {}){mark}", secs(st.time), secs(st.t_p2p));
        let Some(im) = &st.intra else { continue };
        for p in 0..im.used_partitions() {
            let names: Vec<&str> = st
                .kernels
                .iter()
                .enumerate()
                .filter(|&(l, _)| im.partitions[l] == p)
                .map(|(_, &k)| g.kernels[k].name.as_str())
                .collect();
            let (c, mm, n) = (im.t_comp[p], im.t_mem[p], im.t_net[p]);
            let label = if c >= mm && c >= n {
                "compute"
            } else if mm >= n {
                "memory"
            } else {
                "network"
            };
            let _ = writeln!(
                s,
                "  partition {p} [{}]: {} ({label}; comp {} mem {} net {})",
                names.join(", "),
                secs(im.t_cri[p]),
                secs(c),
                secs(mm),
                secs(n)
            );
        }
    }
    let schemes: Vec<String> = g.kernels.iter().zip(&m.inter.schemes).map(|(k, sc)| format!("{}={sc}", k.name)).collect();
    let _ = writeln!(s, "schemes: {}", schemes.join(" "));
    if m.dp_time > 0.0 {
        let _ = writeln!(s, "dp all-reduce: {}", secs(m.dp_time));
    }
    let _ = writeln!(s, "iteration time: {}", secs(r.iteration_time));
    if let Some(bt) = r.bubbled_time {
        let _ = writeln!(s, "with pipeline bubble: {}", secs(bt));
    }
    let _ = writeln!(s, "throughput: {:.4e} FLOP/s, utilization {:.2}%", r.throughput, 100.0 * r.utilization);
    let _ = writeln!(
        s,
        "breakdown: compute {:.1}% memory {:.1}% network {:.1}% ({:?}-bound)",
        100.0 * r.breakdown.compute,
        100.0 * r.breakdown.memory,
        100.0 * r.breakdown.network,
        r.regime
    );
    let _ = writeln!(s, "oi_mem {:.3} FLOP/B, oi_net {:.3} FLOP/B", r.oi_mem, r.oi_net);
    if let (Some(c), Some(p)) = (r.cost_eff, r.power_eff) {
        let _ = writeln!(s, "cost efficiency {c:.4e} FLOP/s/$, power efficiency {p:.4e} FLOP/s/W");
    }
    if !m.optimal {
        let _ = writeln!(s, "note: mapping not proven optimal");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_gpt_layer, GptParams, Kernel, KernelKind};
    use crate::system::{sn10, ChipSpec, NetworkDim, Topology};

    fn single(flop: f64, dims: Option<(u64, u64, u64)>) -> DataflowGraph {
        DataflowGraph {
            name: "one".into(),
            kernels: vec![Kernel {
                id: 0,
                name: "k".into(),
                kind: KernelKind::Gemm,
                flop,
                gemm_dims: dims,
                scheme_ids: vec!["replicated".into()],
                weight_bytes: 0.0,
                output_bytes: 0.0,
            }],
            tensors: vec![],
            element_size: 2.0,
        }
    }

    fn toy_chip() -> ChipSpec {
        ChipSpec {
            name: "toy".into(),
            t_lim: 4,
            t_flop: 1e12,
            s_cap: 1e9,
            d_cap: 1e12,
            d_bw: 1e11,
            tile_shape: (8, 8),
            power_w: None,
            price_usd: None,
        }
    }

    #[test]
    fn degenerate_utilization_is_kernel_utilization() {
        let dims = (20, 16, 20);
        let g = single(2.0 * 20.0 * 16.0 * 20.0, Some(dims));
        let sys = SystemSpec::single_chip(toy_chip());
        let opts = FullOptions::default();
        let m = optimize_full(&g, &sys, &opts).unwrap();
        let r = perf_report(&g, &sys, &m, None, &opts).unwrap();
        let im = m.stages[0].intra.as_ref().unwrap();
        assert_eq!(im.tiles[0], 4);
        let u = crate::intrachip::utilization_model(Some(dims), 4, (8, 8));
        assert!((r.utilization - u).abs() < 1e-12, "{} vs {u}", r.utilization);
        assert_eq!(r.regime, Regime::Compute);
        let rec = roofline(&r).unwrap();
        assert!((rec.achieved - r.throughput).abs() <= 1e-9 * r.throughput);
    }

    #[test]
    fn roofline_min_of_three() {
        let (v, reg) = roofline_bound(307.2e12, 500.0, 200e9, f64::INFINITY, 25e9);
        assert_eq!(reg, Regime::Memory);
        assert!((v - 100e12).abs() < 1.0);
        let (v, reg) = roofline_bound(307.2e12, f64::INFINITY, f64::INFINITY, f64::INFINITY, f64::INFINITY);
        assert_eq!((v, reg), (307.2e12, Regime::Compute));
    }

    fn gpt() -> DataflowGraph {
        generate_gpt_layer(GptParams::new(1, 2048, 12288, 96, 4)).unwrap()
    }

    #[test]
    fn evaluate_reproduces_optimize() {
        let g = gpt();
        let ring = NetworkDim::new(Topology::Ring, 8, 25e9);
        let sys = SystemSpec::new(sn10(), vec![ring], vec![0], vec![], vec![]).unwrap();
        let opts = FullOptions::default();
        let m = optimize_full(&g, &sys, &opts).unwrap();
        let file = MappingFile::from_full(&g, &m);
        let text = serde_json::to_string(&file).unwrap();
        let again = evaluate_full(&g, &sys, &parse_mapping(&text).unwrap(), &opts).unwrap();
        assert!((again.iteration_time - m.iteration_time).abs() <= 1e-9 * m.iteration_time);
        let r = perf_report(&g, &sys, &m, None, &opts).unwrap();
        roofline(&r).unwrap();
        let sum = r.breakdown.compute + r.breakdown.memory + r.breakdown.network;
        assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn mapping_file_errors() {
        let g = gpt();
        let sys = SystemSpec::single_chip(sn10());
        let bad = MappingFile { partitions: vec![vec![KernelRef::Name("nope".into())]], ..Default::default() };
        assert!(matches!(bad.resolve(&g, &sys), Err(Error::Validation(_))));
        let missing = MappingFile { partitions: vec![vec![KernelRef::Index(0)]], ..Default::default() };
        assert!(missing.resolve(&g, &sys).is_err());
    }
}
