//! Collective costs on one-dimensional topologies and on a two-level hierarchy.

use dfmap::collectives::{collective_cost, hierarchical_cost, CollectiveKind};
use dfmap::system::{NetworkDim, Topology};

fn main() -> dfmap::Result<()> {
    let bytes = 12e6;
    println!("{bytes:.0} bytes over 4 chips at 25 GB/s (ms):");
    println!("{:<16}{:>10}{:>10}{:>16}", "", "ring", "switch", "fully_connected");
    for kind in CollectiveKind::ALL {
        let cost = |t| collective_cost(kind, bytes, &NetworkDim::new(t, 4, 25e9)).map(|c| c * 1e3);
        println!(
            "{:<16}{:>10.4}{:>10.4}{:>16.4}",
            format!("{kind:?}"),
            cost(Topology::Ring)?,
            cost(Topology::Switch)?,
            cost(Topology::FullyConnected)?
        );
    }

    // Eight-chip boards joined by a slower switch.
    let dims = [NetworkDim::new(Topology::FullyConnected, 8, 300e9), NetworkDim::new(Topology::Switch, 16, 50e9)];
    for kind in [CollectiveKind::AllReduce, CollectiveKind::ReduceScatter, CollectiveKind::AllGather] {
        println!("hierarchical {kind:?}: {:.4} ms", hierarchical_cost(kind, 1e9, &dims)? * 1e3);
    }
    Ok(())
}
