//! Design-space sweeps: system presets, per-point optimization and CSV
//! reports.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{generate_gpt, generate_workload, DataflowGraph, GptParams, WorkloadParams};
use crate::pipeline::{evaluate_full, optimize_full, perf_report, FullMapping, FullOptions, MappingFile, PerfReport};
use crate::system::{chip_preset, ChipSpec, NetworkDim, SystemSpec, TechCatalog, TechChoice, Topology};

pub const TOPOLOGIES: [&str; 5] = ["2d_torus", "3d_torus", "dragonfly", "dgx1", "dgx2"];
pub const WORKLOADS: [&str; 4] = ["gpt3_1t", "dlrm_793b", "hpl_5m", "fft_1t"];
pub const CHIPS: [&str; 4] = ["H100", "TPUv4", "SN30", "WSE-2"];
pub const MEMORY_TECHS: [&str; 2] = ["ddr4", "hbm3"];
pub const NET_TECHS: [&str; 2] = ["pcie4", "nvlink4"];
pub const GRID_CHIPS: usize = 1024;

pub const CSV_HEADER: &str = "workload,chip,topology,mem_tech,net_tech,n_tp,n_pp,n_dp,throughput_flops,utilization,\
frac_compute,frac_memory,frac_network,cost_eff,power_eff,oi_mem,oi_net,status";

/// Factors `n` into `k` factors, each at least 2, with the smallest spread
/// between largest and smallest; largest first.
pub fn balanced_factors(n: usize, k: usize) -> Option<Vec<usize>> {
    fn rec(n: usize, k: usize, max: usize, cur: &mut Vec<usize>, best: &mut Option<Vec<usize>>) {
        if k == 1 {
            if n >= 2 && n <= max {
                cur.push(n);
                let spread = |v: &[usize]| v[0] as f64 / *v.last().unwrap() as f64;
                if best.as_ref().is_none_or(|b| spread(cur) < spread(b)) {
                    *best = Some(cur.clone());
                }
                cur.pop();
            }
            return;
        }
        for d in (2..=max.min(n / 2)).rev() {
            if n % d == 0 {
                cur.push(d);
                rec(n / d, k - 1, d, cur, best);
                cur.pop();
            }
        }
    }
    if k == 0 {
        return None;
    }
    let mut best = None;
    rec(n, k, n, &mut Vec::new(), &mut best);
    best
}

/// Hierarchical network dims of a named topology with `chips` chips.
pub fn topology_dims(name: &str, chips: usize, link_bw: f64) -> Result<Vec<NetworkDim>> {
    let non_factorable = || Error::NonFactorable { chips, topology: name.to_string() };
    let uniform = |t: Topology, sizes: Vec<usize>| sizes.into_iter().map(|s| NetworkDim::new(t, s, link_bw)).collect();
    let node = |per_node: usize| -> Result<Vec<NetworkDim>> {
        if chips < per_node || chips % per_node != 0 {
            return Err(non_factorable());
        }
        let mut dims = vec![NetworkDim::new(Topology::Switch, per_node, link_bw)];
        if chips > per_node {
            dims.push(NetworkDim::new(Topology::Switch, chips / per_node, link_bw));
        }
        Ok(dims)
    };
    match name {
        "2d_torus" => Ok(uniform(Topology::Ring, balanced_factors(chips, 2).ok_or_else(non_factorable)?)),
        "3d_torus" => Ok(uniform(Topology::Ring, balanced_factors(chips, 3).ok_or_else(non_factorable)?)),
        "dragonfly" => Ok(uniform(Topology::FullyConnected, balanced_factors(chips, 2).ok_or_else(non_factorable)?)),
        "dgx1" => node(8),
        "dgx2" => node(16),
        _ => Err(Error::UnknownTopology(name.to_string())),
    }
}

/// Scaled-down stand-ins for the study's workloads, small enough to solve
/// at every grid point in seconds.
pub fn workload_preset(name: &str) -> Result<DataflowGraph> {
    match name {
        "gpt3_1t" => generate_gpt(GptParams::new(8, 2048, 25600, 160, 4), 2),
        "dlrm_793b" => generate_workload(WorkloadParams::Dlrm {
            tables: 8,
            rows_per_table: 10_000_000,
            emb_dim: 256,
            batch: 8192,
            pooling: 32,
            mlp_layers: 4,
            mlp_width: 2048,
        }),
        "hpl_5m" => generate_workload(WorkloadParams::Hpl { n: 262_144, block: 65_536 }),
        "fft_1t" => generate_workload(WorkloadParams::Fft { points: 1 << 32, radix: 256 }),
        _ => Err(Error::MissingCatalogEntry(format!("workload/{name}"))),
    }
}

/// Whether the workload has a batch to split across data-parallel replicas.
/// HPL and FFT solve one problem, so their DP degree stays 1.
pub fn batch_parallel(name: &str) -> bool {
    matches!(name, "gpt3_1t" | "dlrm_793b")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignPoint {
    pub workload: String,
    pub chip: String,
    pub topology: String,
    pub mem_tech: String,
    pub net_tech: String,
    #[serde(default = "default_chips")]
    pub chips: usize,
    /// Fixed (n_tp, n_pp, n_dp); searched when absent.
    #[serde(default)]
    pub parallelism: Option<(usize, usize, usize)>,
}

fn default_chips() -> usize {
    GRID_CHIPS
}

impl DesignPoint {
    pub fn new(workload: &str, chip: &str, topology: &str, mem_tech: &str, net_tech: &str) -> Self {
        DesignPoint {
            workload: workload.into(),
            chip: chip.into(),
            topology: topology.into(),
            mem_tech: mem_tech.into(),
            net_tech: net_tech.into(),
            chips: GRID_CHIPS,
            parallelism: None,
        }
    }
}

/// Chips × topologies × memory × interconnect for one workload.
pub fn standard_grid(workload: &str) -> Vec<DesignPoint> {
    let mut grid = Vec::new();
    for chip in CHIPS {
        for topo in TOPOLOGIES {
            for mem in MEMORY_TECHS {
                for net in NET_TECHS {
                    grid.push(DesignPoint::new(workload, chip, topo, mem, net));
                }
            }
        }
    }
    grid
}

#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub full: FullOptions,
    pub catalog: TechCatalog,
}

impl Default for SweepOptions {
    /// Both levels stop at their heuristic incumbents (greedy plus local
    /// search between chips, contiguous segmentation on chip), which keeps
    /// a 1024-chip grid point well under a second and fully deterministic.
    fn default() -> Self {
        let mut full = FullOptions::default();
        full.inter.solve.node_limit = 0;
        full.intra.solve.node_limit = 0;
        SweepOptions { full, catalog: TechCatalog::default() }
    }
}

/// Chip and network of a design point with its technology choices applied.
pub fn build_point_system(dp: &DesignPoint, catalog: &TechCatalog) -> Result<(ChipSpec, Vec<NetworkDim>)> {
    let mut chip = chip_preset(&dp.chip)?;
    chip.d_bw = catalog.memory(&dp.mem_tech)?.bandwidth;
    let link_bw = catalog.interconnect(&dp.net_tech)?.bandwidth;
    Ok((chip, topology_dims(&dp.topology, dp.chips, link_bw)?))
}

/// Every way to give each dim to TP, PP or DP, as systems.
pub fn parallelism_candidates(chip: &ChipSpec, dims: &[NetworkDim], max_pp: usize) -> Vec<SystemSpec> {
    let d = dims.len();
    let mut out = Vec::new();
    for code in 0..3usize.pow(d as u32) {
        let mut owner = [Vec::new(), Vec::new(), Vec::new()];
        let mut c = code;
        for i in 0..d {
            owner[c % 3].push(i);
            c /= 3;
        }
        let [tp, pp, dp] = owner;
        let n_pp: usize = pp.iter().map(|&i| dims[i].size).product();
        if n_pp > max_pp {
            continue;
        }
        if let Ok(sys) = SystemSpec::new(chip.clone(), dims.to_vec(), tp, pp, dp) {
            out.push(sys);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointResult {
    pub point: DesignPoint,
    pub system: SystemSpec,
    pub mapping: FullMapping,
    pub report: PerfReport,
}

/// Optimizes one design point, searching the parallelism split unless the
/// point fixes it. Ties keep the first candidate in enumeration order.
pub fn run_point(dp: &DesignPoint, opts: &SweepOptions) -> Result<PointResult> {
    run_point_seeded(dp, opts, &[])
}

/// Like [`run_point`], but also re-evaluates the mappings of `seeds` (results
/// of other points on the same workload and network shape) on this point's
/// hardware and keeps whichever mapping is fastest.
pub fn run_point_seeded(dp: &DesignPoint, opts: &SweepOptions, seeds: &[&PointResult]) -> Result<PointResult> {
    let g = workload_preset(&dp.workload)?;
    let (chip, dims) = build_point_system(dp, &opts.catalog)?;
    let mut candidates = parallelism_candidates(&chip, &dims, g.n());
    if !batch_parallel(&dp.workload) {
        candidates.retain(|s| s.n_dp == 1);
    }
    if let Some(split) = dp.parallelism {
        candidates.retain(|s| (s.n_tp, s.n_pp, s.n_dp) == split);
        if candidates.is_empty() {
            return Err(Error::Validation(format!("no dim assignment gives (n_tp, n_pp, n_dp) = {split:?}")));
        }
    }
    let tech = TechChoice { memory: dp.mem_tech.clone(), interconnect: dp.net_tech.clone() };
    let mut best: Option<PointResult> = None;
    let mut last_err = None;
    let mut consider = |sys: SystemSpec, attempt: Result<FullMapping>| {
        match attempt.and_then(|m| perf_report(&g, &sys, &m, Some(&opts.catalog), &opts.full).map(|r| (m, r))) {
            Ok((mapping, report)) => {
                if best.as_ref().is_none_or(|b| report.throughput > b.report.throughput) {
                    best = Some(PointResult { point: dp.clone(), system: sys, mapping, report });
                }
            }
            Err(e) => last_err = Some(e),
        }
    };
    for mut sys in candidates {
        sys.tech = Some(tech.clone());
        let attempt = optimize_full(&g, &sys, &opts.full);
        consider(sys, attempt);
    }
    for seed in seeds {
        let s = &seed.system;
        let Ok(mut sys) = SystemSpec::new(chip.clone(), dims.clone(), s.tp_dims.clone(), s.pp_dims.clone(), s.dp_dims.clone()) else {
            continue;
        };
        sys.tech = Some(tech.clone());
        let mapping = MappingFile::from_full(&g, &seed.mapping);
        if let Ok(m) = evaluate_full(&g, &sys, &mapping, &opts.full) {
            consider(sys, Ok(m));
        }
    }
    best.ok_or_else(|| last_err.unwrap_or_else(|| Error::Infeasible("no parallelism split fits the system".into())))
}

/// Whether `b` has at least the memory and interconnect bandwidth of `a` on
/// the same workload, chip and network shape.
fn at_least_as_fast(a: &DesignPoint, b: &DesignPoint, catalog: &TechCatalog) -> bool {
    let bw = |p: &DesignPoint| -> Option<(f64, f64)> {
        Some((catalog.memory(&p.mem_tech).ok()?.bandwidth, catalog.interconnect(&p.net_tech).ok()?.bandwidth))
    };
    let same = (&a.workload, &a.chip, &a.topology, a.chips, a.parallelism) == (&b.workload, &b.chip, &b.topology, b.chips, b.parallelism);
    match (bw(a), bw(b)) {
        (Some((ma, na)), Some((mb, nb))) => same && ma <= mb && na <= nb,
        _ => false,
    }
}

#[derive(Debug, Serialize)]
struct Row<'a> {
    workload: &'a str,
    chip: &'a str,
    topology: &'a str,
    mem_tech: &'a str,
    net_tech: &'a str,
    n_tp: Option<usize>,
    n_pp: Option<usize>,
    n_dp: Option<usize>,
    throughput_flops: Option<f64>,
    utilization: Option<f64>,
    frac_compute: Option<f64>,
    frac_memory: Option<f64>,
    frac_network: Option<f64>,
    cost_eff: Option<f64>,
    power_eff: Option<f64>,
    oi_mem: Option<f64>,
    oi_net: Option<f64>,
    status: String,
}

fn row<'a>(dp: &'a DesignPoint, res: &Result<PointResult>) -> Row<'a> {
    let mut r = Row {
        workload: &dp.workload,
        chip: &dp.chip,
        topology: &dp.topology,
        mem_tech: &dp.mem_tech,
        net_tech: &dp.net_tech,
        n_tp: None,
        n_pp: None,
        n_dp: None,
        throughput_flops: None,
        utilization: None,
        frac_compute: None,
        frac_memory: None,
        frac_network: None,
        cost_eff: None,
        power_eff: None,
        oi_mem: None,
        oi_net: None,
        status: String::new(),
    };
    match res {
        Ok(p) => {
            let rep = &p.report;
            r.n_tp = Some(rep.n_tp);
            r.n_pp = Some(rep.n_pp);
            r.n_dp = Some(rep.n_dp);
            r.throughput_flops = Some(rep.throughput);
            r.utilization = Some(rep.utilization);
            r.frac_compute = Some(rep.breakdown.compute);
            r.frac_memory = Some(rep.breakdown.memory);
            r.frac_network = Some(rep.breakdown.network);
            r.cost_eff = rep.cost_eff;
            r.power_eff = rep.power_eff;
            r.oi_mem = Some(rep.oi_mem).filter(|x| x.is_finite());
            r.oi_net = Some(rep.oi_net).filter(|x| x.is_finite());
            r.status = if p.mapping.optimal { "optimal" } else { "feasible" }.into();
        }
        Err(e) => r.status = format!("error: {e}"),
    }
    r
}

/// Runs every point on `workers` threads; results keep grid order.
///
/// Points that differ only in technology form a group. Within a group,
/// points run from slowest to fastest technology and each one is seeded
/// with the results of every point it dominates, so a faster memory or
/// interconnect never reports lower throughput.
pub fn run_grid(grid: &[DesignPoint], workers: usize, opts: &SweepOptions) -> Result<Vec<Result<PointResult>>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Validation(format!("thread pool: {e}")))?;
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in 0..grid.len() {
        let a = &grid[i];
        let key = |p: &DesignPoint| (p.workload.clone(), p.chip.clone(), p.topology.clone(), p.chips, p.parallelism);
        match groups.iter_mut().find(|g| key(&grid[g[0]]) == key(a)) {
            Some(g) => g.push(i),
            None => groups.push(vec![i]),
        }
    }
    let speed = |p: &DesignPoint| {
        let m = opts.catalog.memory(&p.mem_tech).map_or(0.0, |t| t.bandwidth);
        let n = opts.catalog.interconnect(&p.net_tech).map_or(0.0, |t| t.bandwidth);
        (m, n)
    };
    let solved: Vec<Vec<(usize, Result<PointResult>)>> = pool.install(|| {
        groups
            .par_iter()
            .map(|members| {
                let mut order = members.clone();
                order.sort_by(|&a, &b| speed(&grid[a]).partial_cmp(&speed(&grid[b])).expect("finite bandwidths").then(a.cmp(&b)));
                let mut done: Vec<(usize, Result<PointResult>)> = Vec::new();
                for i in order {
                    let seeds: Vec<&PointResult> = done
                        .iter()
                        .filter(|(j, _)| *j != i && at_least_as_fast(&grid[*j], &grid[i], &opts.catalog))
                        .filter_map(|(_, r)| r.as_ref().ok())
                        .collect();
                    let r = run_point_seeded(&grid[i], opts, &seeds);
                    done.push((i, r));
                }
                done
            })
            .collect()
    });
    let mut out: Vec<Option<Result<PointResult>>> = (0..grid.len()).map(|_| None).collect();
    for (i, r) in solved.into_iter().flatten() {
        out[i] = Some(r);
    }
    Ok(out.into_iter().map(|r| r.expect("every point solved")).collect())
}

pub fn sweep_csv(grid: &[DesignPoint], results: &[Result<PointResult>]) -> Result<String> {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for (dp, res) in grid.iter().zip(results) {
        w.serialize(row(dp, res)).map_err(|e| Error::Validation(format!("csv: {e}")))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Validation(format!("csv: {e}")))?;
    out.push_str(&String::from_utf8(bytes).expect("csv output is utf-8"));
    Ok(out)
}

/// One CSV row per grid point, header only for an empty grid.
pub fn run_sweep(grid: &[DesignPoint], workers: usize, opts: &SweepOptions) -> Result<String> {
    let results = run_grid(grid, workers, opts)?;
    sweep_csv(grid, &results)
}

/// Pairs of points that differ only by a faster memory or interconnect
/// technology where utilization went down. A failed weaker point is
/// skipped; a failed stronger point counts as a violation.
pub fn monotonicity_violations(grid: &[DesignPoint], results: &[Result<PointResult>], catalog: &TechCatalog) -> Vec<String> {
    let util = |i: usize| results[i].as_ref().ok().map(|p| p.report.utilization);
    let mut out = Vec::new();
    for (i, a) in grid.iter().enumerate() {
        for (j, b) in grid.iter().enumerate() {
            let same_net = a.net_tech == b.net_tech;
            let same_mem = a.mem_tech == b.mem_tech;
            if (&a.workload, &a.chip, &a.topology, a.chips, a.parallelism) != (&b.workload, &b.chip, &b.topology, b.chips, b.parallelism)
                || same_net == same_mem
            {
                continue;
            }
            let faster = if same_net {
                match (catalog.memory(&a.mem_tech), catalog.memory(&b.mem_tech)) {
                    (Ok(x), Ok(y)) => y.bandwidth > x.bandwidth,
                    _ => false,
                }
            } else {
                match (catalog.interconnect(&a.net_tech), catalog.interconnect(&b.net_tech)) {
                    (Ok(x), Ok(y)) => y.bandwidth > x.bandwidth,
                    _ => false,
                }
            };
            if !faster {
                continue;
            }
            if let Some(ua) = util(i) {
                match util(j) {
                    Some(ub) if ub >= ua * (1.0 - 1e-9) => {}
                    ub => out.push(format!(
                        "{} {} {}: {}/{} utilization {ua} -> {}/{} {ub:?}",
                        a.workload, a.chip, a.topology, a.mem_tech, a.net_tech, b.mem_tech, b.net_tech
                    )),
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn topology_presets() {
        let sizes = |name: &str, n: usize| topology_dims(name, n, 1e9).unwrap().iter().map(|d| d.size).collect::<Vec<_>>();
        assert_eq!(sizes("2d_torus", 1024), vec![32, 32]);
        assert_eq!(sizes("3d_torus", 1024), vec![16, 8, 8]);
        assert_eq!(sizes("dragonfly", 1024), vec![32, 32]);
        assert_eq!(sizes("dgx1", 1024), vec![8, 128]);
        assert_eq!(sizes("dgx2", 1024), vec![16, 64]);
        assert_eq!(sizes("dgx1", 8), vec![8]);
        assert_eq!(topology_dims("dgx1", 8, 1e9).unwrap()[0].topology, Topology::Switch);
        assert_eq!(topology_dims("dragonfly", 64, 1e9).unwrap()[0].topology, Topology::FullyConnected);
        assert!(matches!(topology_dims("hypercube", 8, 1e9), Err(Error::UnknownTopology(_))));
        assert!(matches!(topology_dims("2d_torus", 13, 1e9), Err(Error::NonFactorable { .. })));
        assert!(matches!(topology_dims("dgx2", 24, 1e9), Err(Error::NonFactorable { .. })));
    }

    #[test]
    fn balanced_factorization() {
        assert_eq!(balanced_factors(12, 2), Some(vec![4, 3]));
        assert_eq!(balanced_factors(8, 3), Some(vec![2, 2, 2]));
        assert_eq!(balanced_factors(7, 2), None);
        assert_eq!(balanced_factors(4, 3), None);
    }

    #[test]
    fn presets_validate() {
        for w in WORKLOADS {
            let g = workload_preset(w).unwrap();
            g.validate().unwrap();
            assert!(g.n() <= 20, "{w} has {} kernels", g.n());
        }
        assert_eq!(standard_grid("gpt3_1t").len(), 80);
    }

    #[test]
    fn candidates_cover_every_owner_choice() {
        let dims = topology_dims("2d_torus", 16, 1e9).unwrap();
        let c = parallelism_candidates(&chip_preset("SN30").unwrap(), &dims, 100);
        assert_eq!(c.len(), 9);
        assert!(c.iter().all(|s| s.total_chips() == 16));
        assert_eq!(parallelism_candidates(&chip_preset("SN30").unwrap(), &dims, 1).len(), 4);
    }

    #[test]
    fn empty_grid_is_header_only() {
        assert_eq!(run_sweep(&[], 1, &SweepOptions::default()).unwrap(), format!("{CSV_HEADER}\n"));
    }
}
