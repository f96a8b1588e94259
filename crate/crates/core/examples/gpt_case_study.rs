//! GPT layer on an eight-chip dataflow system: kernel-by-kernel, a
//! hand-written vendor fusion and the optimized mapping, then the same
//! optimizer on a 4x2 torus.

use dfmap::graph::{generate_gpt, GptParams, KernelRef};
use dfmap::pipeline::{evaluate_full, optimize_full, perf_report, render_text, FullOptions, MappingFile};
use dfmap::system::{sn10, NetworkDim, SystemSpec, Topology};

fn main() -> dfmap::Result<()> {
    let g = generate_gpt(GptParams::new(1, 2048, 12288, 96, 4), 1)?;
    let mut opts = FullOptions::default();
    opts.intra.weights_on_chip = true;
    opts.inter.solve.node_limit = 1000;
    opts.intra.solve.node_limit = 1000;
    let ring = SystemSpec::new(sn10(), vec![NetworkDim::new(Topology::Ring, 8, 25e9)], vec![0], vec![], vec![])?;

    let opt = optimize_full(&g, &ring, &opts)?;
    let base = MappingFile::from_full(&g, &opt);
    let group = |names: &[&str]| names.iter().map(|n| KernelRef::Name(n.to_string())).collect::<Vec<_>>();
    let vendor = MappingFile {
        intra: Some(vec![vec![
            group(&["Q", "K", "V"]),
            group(&["MHA1", "Softmax", "MHA2", "Proj"]),
            group(&["FFN0"]),
            group(&["FFN1", "Add"]),
        ]]),
        tiles: None,
        ..base.clone()
    };
    let kbk = MappingFile { intra: None, tiles: None, ..base };

    for (label, m) in [("kernel by kernel", evaluate_full(&g, &ring, &kbk, &opts)?), ("vendor", evaluate_full(&g, &ring, &vendor, &opts)?)] {
        println!("{label}: {:.3} ms", m.iteration_time * 1e3);
    }
    let report = perf_report(&g, &ring, &opt, None, &opts)?;
    print!("optimized on 8x1 ring:\n{}", render_text(&g, &opt, &report));

    let torus = SystemSpec::new(
        sn10(),
        vec![NetworkDim::new(Topology::Ring, 4, 25e9), NetworkDim::new(Topology::Ring, 2, 25e9)],
        vec![0],
        vec![1],
        vec![],
    )?;
    let t = optimize_full(&g, &torus, &opts)?;
    let rt = perf_report(&g, &torus, &t, None, &opts)?;
    println!("4x2 torus throughput {:.4e} vs 8x1 ring {:.4e}", rt.throughput, report.throughput);
    Ok(())
}
