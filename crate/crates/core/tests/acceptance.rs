//! Acceptance harness: one PASS/FAIL line per criterion.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::Rng;

use common::*;
use dfmap::collectives::{collective_cost, hierarchical_cost, CollectiveKind};
use dfmap::dse::{self, SweepOptions};
use dfmap::graph::{generate_gpt, DataflowGraph, GptParams, KernelRef};
use dfmap::interchip::{collective_counts, solve_interchip, InterchipOptions};
use dfmap::intrachip::{solve_intrachip, IntrachipOptions};
use dfmap::mapmat::AssignmentMatrices;
use dfmap::oracle::{enumerate_interchip, enumerate_intrachip, OracleLimits};
use dfmap::pipeline::{evaluate_full, optimize_full, perf_report, roofline, FullMapping, FullOptions, MappingFile, PerfReport, Regime};
use dfmap::system::{sn10, NetworkDim, SystemSpec, Topology};
use dfmap::Error;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err(e: Error) -> String {
    e.to_string()
}

fn matrices_match(parts: &[usize], p: usize, tensors: &[dfmap::graph::Tensor]) -> Result<(), String> {
    let m = AssignmentMatrices::from_partitions(parts, p, tensors).map_err(err)?;
    let d = direct_matrices(parts, p, tensors);
    ensure(m.b == d.b && m.d == d.d && m.l == d.l && m.h == d.h, || format!("derived matrices differ for parts {parts:?}"))?;
    ensure(m.partitions() == parts, || "A does not round-trip".into())?;
    for j in 0..tensors.len() {
        let count = |r: &[bool]| r.iter().filter(|&&x| x).count();
        let (b, dd, l, h) = (&m.b[j], &m.d[j], &m.l[j], &m.h[j]);
        ensure(count(h) == 1, || format!("H row {j} not one-hot"))?;
        ensure(b.iter().zip(dd).all(|(x, y)| !(x & y)), || format!("B and D overlap on tensor {j}"))?;
        ensure((count(b), count(dd)) == (1, 0) || (count(b), count(dd)) == (0, 2), || format!("tensor {j} neither internal nor crossing"))?;
        ensure(dd.iter().zip(l).all(|(x, y)| !x | y), || format!("D not within L on tensor {j}"))?;
        ensure(count(b) == 0 || count(l) == 0, || format!("internal tensor {j} has a DRAM lifetime"))?;
        let on: Vec<usize> = (0..p).filter(|&i| l[i]).collect();
        ensure(on.windows(2).all(|w| w[1] == w[0] + 1), || format!("L row {j} not contiguous"))?;
    }
    Ok(())
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let worked = [dfmap::graph::Tensor { id: 0, src: 0, dst: 1, bytes: 1.0 }];
    let m = AssignmentMatrices::from_partitions(&[0, 2], 4, &worked).map_err(err)?;
    ensure(m.l[0] == vec![true, true, true, false], || format!("worked case L = {:?}", m.l[0]))?;
    let mut r = rng(1);
    let mut rejected = 0;
    for _ in 0..1000 {
        let n = r.gen_range(1..=10);
        let p = r.gen_range(1..=5);
        let tensors = random_tensors(&mut r, n, true);
        let parts = monotone_parts(&mut r, n, p);
        matrices_match(&parts, p, &tensors)?;
        // Arbitrary A: derivation must fail exactly on backward tensors.
        let free: Vec<usize> = (0..n).map(|_| r.gen_range(0..p)).collect();
        let backward = tensors.iter().any(|t| free[t.dst] < free[t.src]);
        match AssignmentMatrices::from_partitions(&free, p, &tensors) {
            Err(Error::Precedence { .. }) if backward => rejected += 1,
            Ok(_) if !backward => matrices_match(&free, p, &tensors)?,
            other => return Err(format!("precedence handling wrong for {free:?}: {:?}", other.map(|_| ()))),
        }
    }
    let t = start.elapsed();
    ensure(t < Duration::from_secs(5), || format!("took {t:?}"))?;
    Ok(format!("1000 instances match, {rejected} backward assignments rejected, {t:.2?}"))
}

fn exact_solve() -> dfmap::milp::SolveOptions {
    dfmap::milp::SolveOptions { node_limit: u64::MAX, time_limit: Duration::from_secs(600), ..Default::default() }
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let limits = OracleLimits::default();
    let mut r = rng(2);
    for case in 0..50u64 {
        let n = r.gen_range(1..=6);
        let g = small_graph(1000 + case, n, 2);
        let sys = ring_system(toy_chip(&mut r), [2, 4][r.gen_range(0..2)], r.gen_range(1..=3), r.gen_range(1e8..1e10));
        let opts = InterchipOptions { solve: exact_solve(), ..Default::default() };
        let oracle = enumerate_interchip(&g, &sys, &opts, &limits).map_err(err)?;
        let milp = solve_interchip(&g, &sys, &opts).map_err(err)?;
        ensure(milp.optimal && rel_eq(milp.objective, oracle.objective, 1e-9), || {
            format!("inter case {case}: milp {} vs oracle {}", milp.objective, oracle.objective)
        })?;
    }
    let mut infeasible = 0;
    for case in 0..50u64 {
        let n = r.gen_range(1..=5);
        let w = small_workload(2000 + case, n);
        let chip = toy_chip(&mut r);
        let p_max = r.gen_range(1..=3);
        let opts = IntrachipOptions { p_max: Some(p_max), menu_size: 3, solve: exact_solve(), ..Default::default() };
        match (enumerate_intrachip(&w, &chip, p_max, 3, &limits), solve_intrachip(&w, &chip, &opts)) {
            (Ok(o), Ok(m)) => ensure(m.optimal && rel_eq(m.objective, o.objective, 1e-9), || {
                format!("intra case {case}: milp {} vs oracle {}", m.objective, o.objective)
            })?,
            (Err(Error::Infeasible(_)), Err(Error::Infeasible(_))) => infeasible += 1,
            (o, m) => return Err(format!("intra case {case}: oracle {:?} vs milp {:?}", o.map(|x| x.objective), m.map(|x| x.objective))),
        }
    }
    let t = start.elapsed();
    ensure(t < Duration::from_secs(600), || format!("took {t:?}"))?;
    Ok(format!("50 inter + 50 intra optima agree ({infeasible} jointly infeasible), {t:.2?}"))
}

fn criterion_3() -> Outcome {
    let sys = SystemSpec::new(sn10(), vec![NetworkDim::new(Topology::Ring, 8, 25e9)], vec![0], vec![], vec![]).map_err(err)?;
    let mut opts = InterchipOptions::default();
    opts.solve.node_limit = 200;
    let per_pass = opts.pass.comm_factor();
    let g = case_layer()?;
    let m = solve_interchip(&g, &sys, &opts).map_err(err)?;
    let counts = collective_counts(&g, &sys, &m.schemes).map_err(err)?;
    let all_reduce = counts.iter().find(|c| c.0 == CollectiveKind::AllReduce).map_or(0, |c| c.1);
    let others: usize = counts.iter().filter(|c| c.0 != CollectiveKind::AllReduce).map(|c| c.1).sum();
    let per_iteration = all_reduce as f64 * per_pass;
    ensure(per_iteration == 4.0 && others == 0, || format!("{counts:?} schemes {:?}", m.schemes))?;
    Ok(format!("{all_reduce} forward all-reduces x {per_pass} = {per_iteration} per iteration, no other collectives"))
}

fn rdu_300(sram_mb: f64, dram_gbs: f64) -> dfmap::system::ChipSpec {
    let mut c = sn10();
    c.name = "RDU-300".into();
    c.t_flop = 300e12 / c.t_lim as f64;
    c.s_cap = sram_mb * 1e6;
    c.d_bw = dram_gbs * 1e9;
    c
}

fn case_layer() -> Result<DataflowGraph, String> {
    generate_gpt(GptParams::new(1, 2048, 12288, 96, 4), 1).map_err(err)
}

fn kernel_by_kernel(g: &DataflowGraph, m: &FullMapping) -> MappingFile {
    MappingFile { intra: None, tiles: None, ..MappingFile::from_full(g, m) }
}

fn criterion_4(reports: &mut Vec<PerfReport>) -> Outcome {
    let g = case_layer()?;
    let mut opts = FullOptions::default();
    opts.inter.solve.node_limit = 200;
    opts.intra.solve.node_limit = 200;
    let sram = [150.0, 300.0, 500.0];
    let bw = [100.0, 300.0, 600.0];
    let mut flow = [[0.0; 3]; 3];
    let mut kbk = [[0.0; 3]; 3];
    for (i, &s) in sram.iter().enumerate() {
        for (j, &b) in bw.iter().enumerate() {
            let dims = vec![NetworkDim::new(Topology::Ring, 4, 25e9), NetworkDim::new(Topology::Ring, 2, 25e9)];
            let sys = SystemSpec::new(rdu_300(s, b), dims, vec![0], vec![1], vec![]).map_err(err)?;
            let f = optimize_full(&g, &sys, &opts).map_err(err)?;
            let k = evaluate_full(&g, &sys, &kernel_by_kernel(&g, &f), &opts).map_err(err)?;
            for m in [&f, &k] {
                reports.push(perf_report(&g, &sys, m, None, &opts).map_err(err)?);
            }
            flow[i][j] = 1.0 / f.iteration_time;
            kbk[i][j] = 1.0 / k.iteration_time;
        }
    }
    let ge = |a: f64, b: f64| a >= b * (1.0 - 1e-12);
    let mut best: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            ensure(ge(flow[i][j], kbk[i][j]), || format!("kernel-by-kernel wins at {} MB / {} GB/s", sram[i], bw[j]))?;
            best = best.max(flow[i][j] / kbk[i][j]);
            if i > 0 {
                ensure(ge(flow[i][j], flow[i - 1][j]), || format!("dataflow drops with SRAM at {} GB/s", bw[j]))?;
            }
            if j > 0 {
                ensure(ge(kbk[i][j], kbk[i][j - 1]), || format!("kernel-by-kernel drops with DRAM bw at {} MB", sram[i]))?;
            }
        }
    }
    ensure((1.2..=2.2).contains(&best), || format!("max ratio {best:.3} outside [1.2, 2.2]"))?;
    Ok(format!("max dataflow / kernel-by-kernel ratio {best:.3}"))
}

fn criterion_5(reports: &mut Vec<PerfReport>) -> Outcome {
    let g = case_layer()?;
    let mut opts = FullOptions::default();
    opts.intra.weights_on_chip = true;
    opts.inter.solve.node_limit = 1000;
    opts.intra.solve.node_limit = 1000;
    let ring8 = SystemSpec::new(sn10(), vec![NetworkDim::new(Topology::Ring, 8, 25e9)], vec![0], vec![], vec![]).map_err(err)?;
    let opt = optimize_full(&g, &ring8, &opts).map_err(err)?;
    let name = |n: &str| KernelRef::Name(n.into());
    let groups: Vec<Vec<KernelRef>> = [&["Q", "K", "V"][..], &["MHA1", "Softmax", "MHA2", "Proj"], &["FFN0"], &["FFN1", "Add"]]
        .iter()
        .map(|grp| grp.iter().map(|n| name(n)).collect())
        .collect();
    let vendor_file = MappingFile { intra: Some(vec![groups]), tiles: None, ..MappingFile::from_full(&g, &opt) };
    let vendor = evaluate_full(&g, &ring8, &vendor_file, &opts).map_err(err)?;
    let non_dataflow = evaluate_full(&g, &ring8, &kernel_by_kernel(&g, &opt), &opts).map_err(err)?;
    let (tn, tv, to) = (non_dataflow.iteration_time, vendor.iteration_time, opt.iteration_time);
    ensure(tn >= tv && tv >= to, || format!("ordering broken: non-dataflow {tn:e} vendor {tv:e} optimized {to:e}"))?;

    let id = |n: &str| g.kernel_by_name(n).map(|k| k.id).ok_or_else(|| format!("no kernel {n}"));
    let (proj, ffn0) = (id("Proj")?, id("FFN0")?);
    let together = opt.stages.iter().any(|s| {
        let at = |k: usize| s.kernels.iter().position(|&x| x == k);
        match (at(proj), at(ffn0), &s.intra) {
            (Some(a), Some(b), Some(im)) => im.partitions[a] == im.partitions[b],
            _ => false,
        }
    });
    ensure(together, || "Proj and FFN0 are not co-located".into())?;

    let torus = SystemSpec::new(
        sn10(),
        vec![NetworkDim::new(Topology::Ring, 4, 25e9), NetworkDim::new(Topology::Ring, 2, 25e9)],
        vec![0],
        vec![1],
        vec![],
    )
    .map_err(err)?;
    let opt_torus = optimize_full(&g, &torus, &opts).map_err(err)?;
    let r8 = perf_report(&g, &ring8, &opt, None, &opts).map_err(err)?;
    let r42 = perf_report(&g, &torus, &opt_torus, None, &opts).map_err(err)?;
    ensure(r42.throughput >= r8.throughput, || format!("4x2 {:e} below 8x1 {:e}", r42.throughput, r8.throughput))?;
    println!("    ratio table (reference values in parentheses):");
    println!("      vendor / non-dataflow      {:.2}x (4.05x)", tn / tv);
    println!("      optimized / non-dataflow   {:.2}x (6.13x)", tn / to);
    println!("      optimized / vendor         {:.2}x (1.52x)", tv / to);
    println!("      4x2 torus / 8x1 ring       {:.2}x (1.28x)", r42.throughput / r8.throughput);
    for m in [&non_dataflow, &vendor, &opt] {
        reports.push(perf_report(&g, &ring8, m, None, &opts).map_err(err)?);
    }
    reports.extend([r8, r42]);
    Ok(format!("non-dataflow {:.3} ms >= vendor {:.3} ms >= optimized {:.3} ms, Proj+FFN0 fused", tn * 1e3, tv * 1e3, to * 1e3))
}

fn regime_of(g: &DataflowGraph, sys: &SystemSpec, file: &MappingFile, opts: &FullOptions) -> Result<Regime, String> {
    let m = evaluate_full(g, sys, file, opts).map_err(err)?;
    let r = perf_report(g, sys, &m, None, opts).map_err(err)?;
    Ok(roofline(&r).map_err(err)?.regime)
}

fn criterion_6(reports: &[PerfReport]) -> Outcome {
    for (i, r) in reports.iter().enumerate() {
        let rec = roofline(r).map_err(|e| format!("report {i}: {e}"))?;
        let chips = (r.n_tp * r.n_pp * r.n_dp) as f64;
        let achieved = r.throughput / chips;
        let roof = |oi: f64, bw: f64| if oi.is_infinite() || bw.is_infinite() { f64::INFINITY } else { oi * bw };
        let bound = r.compute_roof.min(roof(r.oi_mem, r.d_bw)).min(roof(r.oi_net, r.n_bw));
        ensure(rel_eq(achieved, bound, 1e-6), || format!("report {i}: achieved {achieved:e} vs roofs {bound:e}"))?;
        ensure(achieved <= r.peak_flops * (1.0 + 1e-6), || format!("report {i}: above peak"))?;
        ensure(rel_eq(rec.achieved, achieved, 1e-12), || format!("report {i}: roofline record disagrees"))?;
    }

    // Scale one resource across its binding point and watch the label move.
    let g = case_layer()?;
    let mut opts = FullOptions::default();
    opts.inter.solve.node_limit = 200;
    opts.intra.solve.node_limit = 200;
    let system = |d_bw: f64, link: f64| {
        let mut chip = sn10();
        chip.d_bw = d_bw;
        SystemSpec::new(chip, vec![NetworkDim::new(Topology::Ring, 8, link)], vec![0], vec![], vec![]).map_err(err)
    };
    let base = system(200e9, 25e9)?;
    let file = kernel_by_kernel(&g, &optimize_full(&g, &base, &opts).map_err(err)?);
    let flips = [
        (system(1e9, 1e15)?, Regime::Memory),
        (system(1e15, 1e15)?, Regime::Compute),
        (system(1e15, 1e6)?, Regime::Network),
    ];
    for (sys, want) in &flips {
        let got = regime_of(&g, sys, &file, &opts)?;
        ensure(got == *want, || format!("d_bw {:e} link {:e}: {got:?}, expected {want:?}", sys.chip.d_bw, sys.dims[0].link_bw))?;
    }
    Ok(format!("{} reports on the roofline; memory -> compute -> network flips labeled", reports.len()))
}

fn criterion_7(reports: &mut Vec<PerfReport>) -> Outcome {
    let opts = SweepOptions::default();
    let mut detail = Vec::new();
    for w in dse::WORKLOADS {
        let grid = dse::standard_grid(w);
        ensure(grid.len() == 80, || format!("{w}: grid has {} points", grid.len()))?;
        let first = dse::run_grid(&grid, 1, &opts).map_err(err)?;
        let csv = dse::sweep_csv(&grid, &first).map_err(err)?;
        let again = dse::sweep_csv(&grid, &dse::run_grid(&grid, 2, &opts).map_err(err)?).map_err(err)?;
        ensure(csv == again, || format!("{w}: CSV differs between runs"))?;
        let rows = csv.lines().count() - 1;
        ensure(rows == 80, || format!("{w}: {rows} rows"))?;
        ensure(!csv.contains(",error"), || format!("{w}: failed points\n{csv}"))?;
        let violations = dse::monotonicity_violations(&grid, &first, &opts.catalog);
        ensure(violations.is_empty(), || format!("{w}: {violations:?}"))?;
        reports.extend(first.into_iter().flatten().map(|p| p.report));
        detail.push(format!("{w} 80 rows"));
    }
    Ok(format!("{}, deterministic, monotone", detail.join(", ")))
}

fn criterion_8() -> Outcome {
    use CollectiveKind::*;
    use Topology::*;
    let (bytes, bw) = (12e6, 25e9);
    // p = 4; columns are the bandwidth term and the count of hop latencies.
    let table = [
        (AllReduce, Ring, 7.2e-4, 6.0),
        (AllGather, Ring, 3.6e-4, 3.0),
        (ReduceScatter, Ring, 3.6e-4, 3.0),
        (Broadcast, Ring, 3.6e-4, 3.0),
        (AllToAll, Ring, 4.5e-4, 3.0),
        (P2p, Ring, 4.8e-4, 1.0),
        (AllReduce, Switch, 7.2e-4, 6.0),
        (AllGather, Switch, 3.6e-4, 3.0),
        (ReduceScatter, Switch, 3.6e-4, 3.0),
        (Broadcast, Switch, 4.8e-4, 1.0),
        (AllToAll, Switch, 3.6e-4, 1.0),
        (P2p, Switch, 4.8e-4, 1.0),
        (AllReduce, FullyConnected, 2.4e-4, 2.0),
        (AllGather, FullyConnected, 1.2e-4, 1.0),
        (ReduceScatter, FullyConnected, 1.2e-4, 1.0),
        (Broadcast, FullyConnected, 4.8e-4, 1.0),
        (AllToAll, FullyConnected, 1.2e-4, 1.0),
        (P2p, FullyConnected, 4.8e-4, 1.0),
    ];
    for &(kind, topo, beta, hops) in &table {
        for alpha in [0.0, 1e-6] {
            let mut dim = NetworkDim::new(topo, 4, bw);
            dim.hop_latency = alpha;
            let got = collective_cost(kind, bytes, &dim).map_err(err)?;
            let want = beta + hops * alpha;
            ensure(rel_eq(got, want, 1e-12), || format!("{kind:?} on {topo:?} alpha {alpha}: {got:e} vs {want:e}"))?;
        }
    }
    let two_rings = [NetworkDim::new(Ring, 2, 1e9), NetworkDim::new(Ring, 2, 1e9)];
    let c = hierarchical_cost(AllReduce, 8e6, &two_rings).map_err(err)?;
    ensure(rel_eq(c, 12e-3, 1e-12), || format!("2x2 ring all-reduce {c:e}"))?;

    let mut r = rng(8);
    for _ in 0..200 {
        let dims: Vec<NetworkDim> = (0..r.gen_range(1..=3))
            .map(|_| {
                let mut d = NetworkDim::new([Ring, Switch, FullyConnected][r.gen_range(0..3)], r.gen_range(2..=16), r.gen_range(1e9..1e12));
                d.hop_latency = r.gen_range(0.0..1e-5);
                d
            })
            .collect();
        let b = r.gen_range(1.0..1e9);
        let ar = hierarchical_cost(AllReduce, b, &dims).map_err(err)?;
        let rs = hierarchical_cost(ReduceScatter, b, &dims).map_err(err)?;
        let ag = hierarchical_cost(AllGather, b, &dims).map_err(err)?;
        ensure(rel_eq(ar, rs + ag, 1e-12), || format!("all-reduce {ar:e} != rs {rs:e} + ag {ag:e} on {dims:?}"))?;
        let mut share = b;
        let mut staged = 0.0;
        for d in &dims {
            staged += collective_cost(ReduceScatter, share, d).map_err(err)? + collective_cost(AllGather, share, d).map_err(err)?;
            share /= d.size as f64;
        }
        ensure(rel_eq(ar, staged, 1e-12), || format!("staged composition {staged:e} vs {ar:e}"))?;
    }
    Ok(format!("{} closed forms x 2 latencies, 200 composition identities", table.len()))
}

fn main() -> ExitCode {
    let mut reports = Vec::new();
    let mut failed = 0;
    let mut report = |n: usize, outcome: Outcome| match outcome {
        Ok(msg) => println!("PASS criterion {n}: {msg}"),
        Err(msg) => {
            failed += 1;
            println!("FAIL criterion {n}: {msg}");
        }
    };
    report(1, criterion_1());
    report(2, criterion_2());
    report(3, criterion_3());
    report(4, criterion_4(&mut reports));
    report(5, criterion_5(&mut reports));
    let sweep = criterion_7(&mut reports);
    report(6, criterion_6(&reports));
    report(7, sweep);
    report(8, criterion_8());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
