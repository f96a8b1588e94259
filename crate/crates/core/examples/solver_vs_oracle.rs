//! Checks the branch-and-bound optimum against exhaustive enumeration on
//! small random graphs.

use std::time::Duration;

use dfmap::graph::generate_random;
use dfmap::interchip::{solve_interchip, InterchipOptions};
use dfmap::intrachip::{solve_intrachip, ChipWorkload, IntrachipOptions};
use dfmap::milp::SolveOptions;
use dfmap::oracle::{enumerate_interchip, enumerate_intrachip, OracleLimits};
use dfmap::system::{sn10, NetworkDim, SystemSpec, Topology};

fn main() -> dfmap::Result<()> {
    let exact = SolveOptions { node_limit: u64::MAX, time_limit: Duration::from_secs(60), ..Default::default() };
    let limits = OracleLimits::default();
    let mut chip = sn10();
    chip.t_lim = 16;
    chip.s_cap = 1e6;
    for seed in 0..5 {
        let mut g = generate_random(5, 0.4, seed)?;
        for k in &mut g.kernels {
            k.scheme_ids.truncate(2);
        }
        let sys = SystemSpec::new(
            chip.clone(),
            vec![NetworkDim::new(Topology::Ring, 4, 1e9), NetworkDim::new(Topology::Ring, 2, 1e9)],
            vec![0],
            vec![1],
            vec![],
        )?;
        let opts = InterchipOptions { solve: exact.clone(), ..Default::default() };
        let milp = solve_interchip(&g, &sys, &opts)?;
        let oracle = enumerate_interchip(&g, &sys, &opts, &limits)?;
        println!("inter seed {seed}: milp {:.6e} oracle {:.6e}", milp.objective, oracle.objective);

        let w = ChipWorkload::new(g);
        let opts = IntrachipOptions { p_max: Some(3), menu_size: 3, solve: exact.clone(), ..Default::default() };
        match (solve_intrachip(&w, &chip, &opts), enumerate_intrachip(&w, &chip, 3, 3, &limits)) {
            (Ok(m), Ok(o)) => println!("intra seed {seed}: milp {:.6e} oracle {:.6e}", m.objective, o.objective),
            (m, o) => println!("intra seed {seed}: milp {:?} oracle {:?}", m.err(), o.err()),
        }
    }
    Ok(())
}
