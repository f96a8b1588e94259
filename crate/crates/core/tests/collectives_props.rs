use approx::assert_relative_eq;
use proptest::prelude::*;

use dfmap::collectives::{collective_cost, hierarchical_cost, CollectiveKind};
use dfmap::system::{NetworkDim, Topology};

fn dim() -> impl Strategy<Value = NetworkDim> {
    (0usize..3, 2usize..=32, 1e9f64..1e12, 0.0f64..1e-5).prop_map(|(t, p, bw, alpha)| {
        let mut d = NetworkDim::new([Topology::Ring, Topology::Switch, Topology::FullyConnected][t], p, bw);
        d.hop_latency = alpha;
        d
    })
}

proptest! {
    #[test]
    fn costs_grow_with_bytes(d in dim(), b in 1.0f64..1e9, k in 0usize..6) {
        let kind = CollectiveKind::ALL[k];
        let small = collective_cost(kind, b, &d).unwrap();
        let big = collective_cost(kind, 2.0 * b, &d).unwrap();
        prop_assert!(small > 0.0 && big > small);
    }

    #[test]
    fn all_reduce_is_scatter_then_gather(dims in proptest::collection::vec(dim(), 1..4), b in 1.0f64..1e9) {
        let ar = hierarchical_cost(CollectiveKind::AllReduce, b, &dims).unwrap();
        let rs = hierarchical_cost(CollectiveKind::ReduceScatter, b, &dims).unwrap();
        let ag = hierarchical_cost(CollectiveKind::AllGather, b, &dims).unwrap();
        assert_relative_eq!(ar, rs + ag, max_relative = 1e-12);
    }

    #[test]
    fn faster_links_never_cost_more(d in dim(), b in 1.0f64..1e9, k in 0usize..6) {
        let kind = CollectiveKind::ALL[k];
        let mut fast = d.clone();
        fast.link_bw *= 2.0;
        prop_assert!(collective_cost(kind, b, &fast).unwrap() <= collective_cost(kind, b, &d).unwrap());
    }
}

#[test]
fn ring_all_reduce_reference_value() {
    let c = collective_cost(CollectiveKind::AllReduce, 12e6, &NetworkDim::new(Topology::Ring, 4, 25e9)).unwrap();
    assert_relative_eq!(c, 0.72e-3, max_relative = 1e-12);
}
