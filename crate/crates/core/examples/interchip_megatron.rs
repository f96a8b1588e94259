//! Inter-chip mapping of a GPT layer with tensor parallelism over an
//! eight-chip ring: the solver picks Megatron-style sharding.

use dfmap::graph::{generate_gpt, GptParams};
use dfmap::interchip::{collective_counts, solve_interchip, InterchipOptions};
use dfmap::system::{sn10, NetworkDim, SystemSpec, Topology};

fn main() -> dfmap::Result<()> {
    let g = generate_gpt(GptParams::new(1, 2048, 12288, 96, 4), 1)?;
    let sys = SystemSpec::new(sn10(), vec![NetworkDim::new(Topology::Ring, 8, 25e9)], vec![0], vec![], vec![])?;
    let mut opts = InterchipOptions::default();
    opts.solve.node_limit = 200;
    let m = solve_interchip(&g, &sys, &opts)?;
    for (k, s) in g.kernels.iter().zip(&m.schemes) {
        println!("{:<8} {s}", k.name);
    }
    for (kind, n) in collective_counts(&g, &sys, &m.schemes)? {
        if n > 0 {
            println!("{kind:?}: {n} forward, {} per training iteration", n as f64 * opts.pass.comm_factor());
        }
    }
    println!("stage time {:.3} ms (compute {:.3} ms, network {:.3} ms)", m.objective * 1e3, m.t_comp[0] * 1e3, m.t_net[0] * 1e3);

    // Two pipeline stages instead: the graph splits across a 2-ring.
    let pp = SystemSpec::new(sn10(), vec![NetworkDim::new(Topology::Ring, 4, 25e9), NetworkDim::new(Topology::Ring, 2, 25e9)], vec![0], vec![1], vec![])?;
    let m = solve_interchip(&g, &pp, &opts)?;
    for i in 0..m.p_max {
        let names: Vec<&str> = m.stage_kernels(i).into_iter().map(|k| g.kernels[k].name.as_str()).collect();
        println!("stage {i}: {:.3} ms {names:?}", m.t_cri[i] * 1e3);
    }
    Ok(())
}
