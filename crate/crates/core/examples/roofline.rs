//! Places kernel-by-kernel and fused mappings of a GPT layer on the
//! memory and network roofline as DRAM bandwidth changes.

use dfmap::graph::{generate_gpt, GptParams};
use dfmap::pipeline::{evaluate_full, optimize_full, perf_report, roofline, FullOptions, MappingFile};
use dfmap::system::{sn10, NetworkDim, SystemSpec, Topology};

fn main() -> dfmap::Result<()> {
    let g = generate_gpt(GptParams::new(1, 2048, 12288, 96, 4), 1)?;
    let mut opts = FullOptions::default();
    opts.inter.solve.node_limit = 200;
    opts.intra.solve.node_limit = 200;
    println!("{:>9} {:>8} {:>12} {:>10} {:>10} {:>9}", "DRAM GB/s", "mapping", "TFLOP/s/chip", "OI mem", "OI net", "regime");
    for bw in [50e9, 200e9, 1000e9, 5000e9] {
        let mut chip = sn10();
        chip.d_bw = bw;
        let sys = SystemSpec::new(chip, vec![NetworkDim::new(Topology::Ring, 8, 25e9)], vec![0], vec![], vec![])?;
        let fused = optimize_full(&g, &sys, &opts)?;
        let kbk = MappingFile { intra: None, tiles: None, ..MappingFile::from_full(&g, &fused) };
        let kbk = evaluate_full(&g, &sys, &kbk, &opts)?;
        for (label, m) in [("fused", &fused), ("kbk", &kbk)] {
            let r = roofline(&perf_report(&g, &sys, m, None, &opts)?)?;
            println!("{:>9.0} {label:>8} {:>12.2} {:>10.2} {:>10.2} {:>9?}", bw / 1e9, r.achieved / 1e12, r.oi_mem, r.oi_net, r.regime);
        }
    }
    Ok(())
}
