//! Dataflow (fused) against kernel-by-kernel mappings of a GPT layer while
//! SRAM capacity and DRAM bandwidth vary on a 300 TFLOPS chip.

use dfmap::graph::{generate_gpt, GptParams};
use dfmap::pipeline::{evaluate_full, optimize_full, FullOptions, MappingFile};
use dfmap::system::{sn10, NetworkDim, SystemSpec, Topology};

const SRAM_MB: [f64; 3] = [150.0, 300.0, 500.0];
const DRAM_GBS: [f64; 3] = [100.0, 300.0, 600.0];

fn main() -> dfmap::Result<()> {
    let g = generate_gpt(GptParams::new(1, 2048, 12288, 96, 4), 1)?;
    let mut opts = FullOptions::default();
    opts.inter.solve.node_limit = 200;
    opts.intra.solve.node_limit = 200;

    println!("{:>8} {:>8} {:>14} {:>14} {:>7}", "sram_MB", "dram_GB/s", "dataflow_TF/s", "kbk_TF/s", "ratio");
    let mut best: f64 = 0.0;
    for sram in SRAM_MB {
        for bw in DRAM_GBS {
            let mut chip = sn10();
            chip.name = "RDU-300".into();
            chip.t_flop = 300e12 / chip.t_lim as f64;
            chip.s_cap = sram * 1e6;
            chip.d_bw = bw * 1e9;
            let dims = vec![NetworkDim::new(Topology::Ring, 4, 25e9), NetworkDim::new(Topology::Ring, 2, 25e9)];
            let sys = SystemSpec::new(chip, dims, vec![0], vec![1], vec![])?;
            let flow = optimize_full(&g, &sys, &opts)?;
            let kbk = MappingFile { intra: None, tiles: None, ..MappingFile::from_full(&g, &flow) };
            let kbk = evaluate_full(&g, &sys, &kbk, &opts)?;
            let tf = |t: f64| g.total_flop() * 3.0 / t / 1e12;
            let ratio = kbk.iteration_time / flow.iteration_time;
            best = best.max(ratio);
            println!("{sram:>8} {bw:>8} {:>14.2} {:>14.2} {ratio:>7.2}", tf(flow.iteration_time), tf(kbk.iteration_time));
        }
    }
    println!("max dataflow / kernel-by-kernel speedup {best:.2}x");
    Ok(())
}
