//! On-chip fusion of a GPT layer: partitions, tile allocation and the
//! kernel-by-kernel alternative on the same chip.

use dfmap::graph::{generate_gpt, GptParams};
use dfmap::intrachip::{evaluate_intrachip, solve_intrachip, tile_menu, ChipWorkload, IntrachipOptions};
use dfmap::system::sn10;

fn main() -> dfmap::Result<()> {
    let g = generate_gpt(GptParams::new(1, 512, 4096, 32, 4), 1)?;
    let chip = sn10();
    let w = ChipWorkload::new(g.clone());
    let mut opts = IntrachipOptions { p_max: Some(4), ..Default::default() };
    opts.solve.node_limit = 500;
    let m = solve_intrachip(&w, &chip, &opts)?;
    for p in 0..m.p_max {
        let ks: Vec<usize> = (0..g.n()).filter(|&k| m.partitions[k] == p).collect();
        if ks.is_empty() {
            continue;
        }
        let names: Vec<String> = ks.iter().map(|&k| format!("{}x{}", g.kernels[k].name, m.tiles[k])).collect();
        println!("partition {p}: {:.3} ms (mem {:.3} ms) {}", m.t_cri[p] * 1e3, m.t_mem[p] * 1e3, names.join(" "));
    }
    println!("fused: {:.3} ms{}", m.objective * 1e3, if m.optimal { "" } else { " (not proven optimal)" });

    let menu = tile_menu(chip.t_lim, 4);
    let singles: Vec<usize> = (0..g.n()).collect();
    let full_chip = vec![menu[0]; g.n()];
    let kbk = evaluate_intrachip(&w, &chip, &singles, &full_chip, g.n())?;
    println!("kernel by kernel: {:.3} ms", kbk.objective * 1e3);
    Ok(())
}
