//! Builds each workload family and prints its kernels, FLOP and tensor traffic.

use dfmap::dse::{workload_preset, WORKLOADS};
use dfmap::graph::{generate_gpt, generate_workload, GptParams, WorkloadParams};

fn main() -> dfmap::Result<()> {
    let gpt = generate_gpt(GptParams::new(1, 2048, 12288, 96, 4), 1)?;
    println!("{}: {} kernels, {} tensors", gpt.name, gpt.n(), gpt.m());
    for k in &gpt.kernels {
        println!("  {:<8} {:?} {:.3e} FLOP, {:.1} MB weights", k.name, k.kind, k.flop, k.weight_bytes / 1e6);
    }

    let fft = generate_workload(WorkloadParams::Fft { points: 1 << 20, radix: 32 })?;
    let hpl = generate_workload(WorkloadParams::Hpl { n: 8192, block: 2048 })?;
    for g in [&fft, &hpl] {
        println!("{}: {} kernels, {:.3e} FLOP", g.name, g.n(), g.total_flop());
    }

    println!("design-space presets:");
    for name in WORKLOADS {
        let g = workload_preset(name)?;
        let bytes: f64 = g.tensors.iter().map(|t| t.bytes).sum();
        println!("  {name:<10} {:>3} kernels {:.3e} FLOP {:.3e} tensor bytes", g.n(), g.total_flop(), bytes);
    }
    Ok(())
}
