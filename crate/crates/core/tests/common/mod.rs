#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dfmap::graph::{generate_random, DataflowGraph, Tensor};
use dfmap::intrachip::ChipWorkload;
use dfmap::system::{sn10, ChipSpec, NetworkDim, SystemSpec, Topology};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rel_eq(a: f64, b: f64, tol: f64) -> bool {
    a == b || (a - b).abs() <= tol * a.abs().max(b.abs())
}

/// Random tensor list over `n` kernels; `forward` keeps every src < dst.
pub fn random_tensors(r: &mut ChaCha8Rng, n: usize, forward: bool) -> Vec<Tensor> {
    let m = r.gen_range(0..=2 * n);
    (0..m)
        .map(|id| {
            let (mut src, mut dst) = (r.gen_range(0..n), r.gen_range(0..n));
            if forward && src > dst {
                std::mem::swap(&mut src, &mut dst);
            }
            Tensor { id, src, dst, bytes: r.gen_range(1.0..1e6) }
        })
        .collect()
}

/// Partition per kernel that never sends a forward tensor backwards.
pub fn monotone_parts(r: &mut ChaCha8Rng, n: usize, p: usize) -> Vec<usize> {
    let mut parts: Vec<usize> = (0..n).map(|_| r.gen_range(0..p)).collect();
    parts.sort_unstable();
    parts
}

/// Direct per-entry definitions of the tensor matrices.
pub struct Direct {
    pub b: Vec<Vec<bool>>,
    pub d: Vec<Vec<bool>>,
    pub l: Vec<Vec<bool>>,
    pub h: Vec<Vec<bool>>,
}

pub fn direct_matrices(parts: &[usize], p: usize, tensors: &[Tensor]) -> Direct {
    let row = |f: &dyn Fn(usize, usize, usize) -> bool| -> Vec<Vec<bool>> {
        tensors.iter().map(|t| (0..p).map(|i| f(parts[t.src], parts[t.dst], i)).collect()).collect()
    };
    Direct {
        b: row(&|s, d, i| s == i && d == i),
        d: row(&|s, d, i| s != d && (i == s || i == d)),
        l: row(&|s, d, i| s != d && s <= i && i <= d),
        h: row(&|s, _, i| s == i),
    }
}

/// A random graph of `n` kernels keeping at most `schemes` options each.
pub fn small_graph(seed: u64, n: usize, schemes: usize) -> DataflowGraph {
    let mut g = generate_random(n, 0.4, seed).expect("valid generator arguments");
    for k in &mut g.kernels {
        k.scheme_ids.truncate(schemes);
    }
    g
}

pub fn toy_chip(r: &mut ChaCha8Rng) -> ChipSpec {
    let mut c = sn10();
    c.name = "toy".into();
    c.t_lim = 16;
    c.t_flop = r.gen_range(1e9..1e11);
    c.s_cap = r.gen_range(2e5..4e6);
    c.d_bw = r.gen_range(1e9..1e11);
    c
}

/// TP over a ring of `tp` and PP over a ring of `pp` (each omitted when 1).
pub fn ring_system(chip: ChipSpec, tp: usize, pp: usize, bw: f64) -> SystemSpec {
    let mut dims = Vec::new();
    let (mut tp_dims, mut pp_dims) = (Vec::new(), Vec::new());
    if tp > 1 {
        tp_dims.push(dims.len());
        dims.push(NetworkDim::new(Topology::Ring, tp, bw));
    }
    if pp > 1 {
        pp_dims.push(dims.len());
        dims.push(NetworkDim::new(Topology::Ring, pp, bw));
    }
    SystemSpec::new(chip, dims, tp_dims, pp_dims, vec![]).expect("valid ring system")
}

pub fn small_workload(seed: u64, n: usize) -> ChipWorkload {
    ChipWorkload::new(small_graph(seed, n, 1))
}
