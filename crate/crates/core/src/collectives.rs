//! Analytical α–β cost models for collectives on one-dimensional topologies
//! and their hierarchical (dimension-ordered) compositions.
//!
//! Notation used throughout: `p` chips in the dimension, `B` link bandwidth
//! in bytes/s, `α` per-hop latency in seconds. `bytes` is always the full
//! logical tensor size, not the per-chip shard. No contention factor is ever
//! applied: links run at full bandwidth.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::system::{NetworkDim, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollectiveKind {
    AllReduce,
    AllGather,
    ReduceScatter,
    Broadcast,
    AllToAll,
    P2p,
}

impl CollectiveKind {
    pub const ALL: [CollectiveKind; 6] = [
        CollectiveKind::AllReduce,
        CollectiveKind::AllGather,
        CollectiveKind::ReduceScatter,
        CollectiveKind::Broadcast,
        CollectiveKind::AllToAll,
        CollectiveKind::P2p,
    ];
}

/// Cost in seconds of one collective over a single network dimension.
pub fn collective_cost(kind: CollectiveKind, bytes: f64, dim: &NetworkDim) -> Result<f64> {
    if bytes < 0.0 || !bytes.is_finite() {
        return Err(Error::Validation(format!("collective size must be a finite nonnegative byte count, got {bytes}")));
    }
    if dim.size <= 1 || bytes == 0.0 {
        return Ok(0.0);
    }
    let p = dim.size as f64;
    let bw = dim.link_bw;
    let alpha = dim.hop_latency;
    let frac = (p - 1.0) / p;

    let cost = match (kind, dim.topology) {
        // Point-to-point is a single transfer over one link on any topology.
        (CollectiveKind::P2p, _) => bytes / bw + alpha,

        // Ring algorithms. On a switch each chip owns one full-bandwidth port,
        // so the bandwidth-optimal ring schedule runs unchanged.
        (CollectiveKind::AllReduce, Topology::Ring | Topology::Switch) => {
            2.0 * frac * bytes / bw + 2.0 * (p - 1.0) * alpha
        }
        (CollectiveKind::AllGather | CollectiveKind::ReduceScatter, Topology::Ring | Topology::Switch) => {
            frac * bytes / bw + (p - 1.0) * alpha
        }

        // Fully connected: every chip drives p-1 links at once, so the direct
        // reduce-scatter/all-gather phases split their traffic over p-1 links.
        (CollectiveKind::AllReduce, Topology::FullyConnected) => 2.0 * frac * bytes / (bw * (p - 1.0)) + 2.0 * alpha,
        (CollectiveKind::AllGather | CollectiveKind::ReduceScatter, Topology::FullyConnected) => {
            frac * bytes / (bw * (p - 1.0)) + alpha
        }

        // Pipelined ring broadcast; one hop from a switch or a direct neighbor.
        (CollectiveKind::Broadcast, Topology::Ring) => frac * bytes / bw + (p - 1.0) * alpha,
        (CollectiveKind::Broadcast, Topology::Switch | Topology::FullyConnected) => bytes / bw + alpha,

        (CollectiveKind::AllToAll, Topology::Switch) => frac * bytes / bw + alpha,
        (CollectiveKind::AllToAll, Topology::FullyConnected) => frac * bytes / (bw * (p - 1.0)) + alpha,
        // Store-and-forward on a bidirectional ring: the aggregate hop count of
        // all (src, dst) pairs gives bytes·(p²-1)/(4p) per link.
        (CollectiveKind::AllToAll, Topology::Ring) => bytes * (p * p - 1.0) / (4.0 * p) / bw + (p - 1.0) * alpha,
    };
    Ok(cost)
}

/// Dimension-ordered composition over `dims` (innermost first).
///
/// All-reduce runs reduce-scatter stages inward then all-gather stages back
/// outward; stage `k` moves `bytes / Π_{i<k} size_i`. Broadcast and
/// all-to-all run one full-size stage per dimension. Point-to-point is only
/// defined along a single dimension.
pub fn hierarchical_cost(kind: CollectiveKind, bytes: f64, dims: &[NetworkDim]) -> Result<f64> {
    if dims.is_empty() {
        return Err(Error::Validation("hierarchical collective needs at least one dimension".into()));
    }
    if dims.len() == 1 {
        return collective_cost(kind, bytes, &dims[0]);
    }
    if bytes == 0.0 {
        return Ok(0.0);
    }

    let staged = |stage_kind: CollectiveKind| -> Result<f64> {
        let mut total = 0.0;
        let mut share = bytes;
        for dim in dims {
            total += collective_cost(stage_kind, share, dim)?;
            share /= dim.size as f64;
        }
        Ok(total)
    };

    match kind {
        CollectiveKind::ReduceScatter => staged(CollectiveKind::ReduceScatter),
        // Same stage sizes as reduce-scatter, traversed in reverse order.
        CollectiveKind::AllGather => staged(CollectiveKind::AllGather),
        CollectiveKind::AllReduce => Ok(staged(CollectiveKind::ReduceScatter)? + staged(CollectiveKind::AllGather)?),
        CollectiveKind::Broadcast | CollectiveKind::AllToAll => {
            dims.iter().map(|d| collective_cost(kind, bytes, d)).sum()
        }
        CollectiveKind::P2p => {
            let multi: Vec<_> = dims.iter().filter(|d| d.size > 1).collect();
            match multi.as_slice() {
                [] => Ok(0.0),
                [single] => collective_cost(kind, bytes, single),
                _ => Err(Error::UnsupportedCollective {
                    kind,
                    topology: format!("{}-dimensional composition", multi.len()),
                }),
            }
        }
    }
}

/// Cost over an optional set of dimensions; an empty set means one chip.
pub(crate) fn cost_over(kind: CollectiveKind, bytes: f64, dims: &[NetworkDim]) -> Result<f64> {
    if dims.iter().all(|d| d.size <= 1) {
        return Ok(0.0);
    }
    hierarchical_cost(kind, bytes, dims)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MB: f64 = 1e6;
    const GB: f64 = 1e9;

    fn dim(topology: Topology, size: usize, bw: f64) -> NetworkDim {
        NetworkDim { topology, size, link_bw: bw, hop_latency: 0.0 }
    }

    fn rel_eq(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
    }

    #[test]
    fn ring_all_reduce_closed_form() {
        let c = collective_cost(CollectiveKind::AllReduce, 12.0 * MB, &dim(Topology::Ring, 4, 25.0 * GB)).unwrap();
        assert!(rel_eq(c, 0.72e-3, 1e-12), "{c}");
    }

    #[test]
    fn single_chip_and_empty_payload_are_free() {
        for kind in CollectiveKind::ALL {
            for topo in [Topology::Ring, Topology::Switch, Topology::FullyConnected] {
                assert_eq!(collective_cost(kind, 5.0 * MB, &dim(topo, 1, GB)).unwrap(), 0.0);
                assert_eq!(collective_cost(kind, 0.0, &dim(topo, 8, GB)).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn p2p_is_size_over_bandwidth() {
        let c = collective_cost(CollectiveKind::P2p, 1.0 * GB, &dim(Topology::Ring, 2, 1.0 * GB)).unwrap();
        assert_eq!(c, 1.0);
    }

    #[test]
    fn hop_latency_enters_linearly() {
        let mut d = dim(Topology::Ring, 4, GB);
        d.hop_latency = 1e-6;
        let c = collective_cost(CollectiveKind::AllGather, 0.0 + 4.0 * MB, &d).unwrap();
        assert!(rel_eq(c, 0.75 * 4.0 * MB / GB + 3e-6, 1e-12));
    }

    #[test]
    fn negative_bytes_rejected() {
        assert!(collective_cost(CollectiveKind::P2p, -1.0, &dim(Topology::Ring, 2, GB)).is_err());
    }

    #[test]
    fn multi_dim_p2p_unsupported() {
        let dims = [dim(Topology::Ring, 2, GB), dim(Topology::Ring, 2, GB)];
        assert!(matches!(
            hierarchical_cost(CollectiveKind::P2p, MB, &dims),
            Err(Error::UnsupportedCollective { .. })
        ));
    }

    #[test]
    fn hierarchical_two_rings_staged() {
        // rs 8MB/2 -> 4MB, rs 4MB/2 -> 2MB, ag 2MB, ag 4MB
        let dims = [dim(Topology::Ring, 2, GB), dim(Topology::Ring, 2, GB)];
        let c = hierarchical_cost(CollectiveKind::AllReduce, 8.0 * MB, &dims).unwrap();
        assert!(rel_eq(c, 12.0 * MB / GB, 1e-12), "{c}");
    }
}
