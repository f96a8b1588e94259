//! Tensor-parallel sharding schemes and the layout conversions between them.

use serde::{Deserialize, Serialize};

use crate::collectives::CollectiveKind;
use crate::error::{Error, Result};
use crate::graph::{Kernel, KernelKind};

/// How a tensor is distributed across the TP group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    RowSharded,
    ColSharded,
    Replicated,
    PartialSum,
}

/// Which tensor an inherent collective moves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operand {
    Output,
    Weights,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShardingScheme {
    pub id: &'static str,
    /// Kernel kinds the scheme applies to; empty means every kind.
    pub kinds: &'static [KernelKind],
    /// Whether the kernel's FLOP are split over the TP group.
    pub sharded: bool,
    pub inherent: Option<(CollectiveKind, Operand)>,
    /// Layout every input tensor must arrive in.
    pub input_layout: Layout,
    pub output_layout: Layout,
}

impl ShardingScheme {
    pub fn flop_scale(&self, n_tp: usize) -> f64 {
        if self.sharded {
            1.0 / n_tp.max(1) as f64
        } else {
            1.0
        }
    }

    pub fn applies_to(&self, kind: KernelKind) -> bool {
        self.kinds.is_empty() || self.kinds.contains(&kind)
    }

    /// Per-chip (M, K, N) of a GEMM-like kernel under this scheme.
    pub fn shard_dims(&self, dims: (u64, u64, u64), n_tp: usize) -> (u64, u64, u64) {
        let n = n_tp.max(1) as u64;
        let (m, k, nn) = dims;
        if !self.sharded || n == 1 {
            return dims;
        }
        match self.id {
            "gemm_row" => (m.div_ceil(n), k, nn),
            "gemm_col" => (m, k, nn.div_ceil(n)),
            _ => (m, k.div_ceil(n), nn),
        }
    }

    /// Bytes moved by the inherent collective of `k` under this scheme.
    pub fn inherent_bytes(&self, k: &Kernel) -> Option<(CollectiveKind, f64)> {
        self.inherent.map(|(kind, op)| {
            let bytes = match op {
                Operand::Output => k.output_bytes,
                Operand::Weights => k.weight_bytes,
            };
            (kind, bytes)
        })
    }
}

use KernelKind as K;
use Layout::*;

const ELEMENTWISE: &[KernelKind] = &[K::Softmax, K::Elementwise];

/// The built-in scheme catalog.
///
/// `gemm_row` shards the activation rows and keeps the weight replicated,
/// which needs the weight broadcast. `gemm_partial` shards the contraction
/// dimension and all-reduces the partial output. `gemm_col` shards the
/// weight columns and produces a column-sharded output with no collective.
pub static SCHEMES: &[ShardingScheme] = &[
    ShardingScheme {
        id: "gemm_row",
        kinds: &[K::Gemm],
        sharded: true,
        inherent: Some((CollectiveKind::Broadcast, Operand::Weights)),
        input_layout: RowSharded,
        output_layout: RowSharded,
    },
    ShardingScheme {
        id: "gemm_partial",
        kinds: &[K::Gemm],
        sharded: true,
        inherent: Some((CollectiveKind::AllReduce, Operand::Output)),
        input_layout: ColSharded,
        output_layout: Replicated,
    },
    ShardingScheme {
        id: "gemm_col",
        kinds: &[K::Gemm],
        sharded: true,
        inherent: None,
        input_layout: Replicated,
        output_layout: ColSharded,
    },
    ShardingScheme {
        id: "attn_heads",
        kinds: &[K::AttentionScore],
        sharded: true,
        inherent: None,
        input_layout: ColSharded,
        output_layout: ColSharded,
    },
    ShardingScheme {
        id: "elem_row",
        kinds: ELEMENTWISE,
        sharded: true,
        inherent: None,
        input_layout: RowSharded,
        output_layout: RowSharded,
    },
    ShardingScheme {
        id: "elem_col",
        kinds: ELEMENTWISE,
        sharded: true,
        inherent: None,
        input_layout: ColSharded,
        output_layout: ColSharded,
    },
    ShardingScheme {
        id: "emb_rows",
        kinds: &[K::EmbeddingLookup],
        sharded: true,
        inherent: Some((CollectiveKind::AllToAll, Operand::Output)),
        input_layout: Replicated,
        output_layout: RowSharded,
    },
    ShardingScheme {
        id: "fft_stage",
        kinds: &[K::FftStage],
        sharded: true,
        inherent: None,
        input_layout: ColSharded,
        output_layout: RowSharded,
    },
    ShardingScheme {
        id: "lu_panel",
        kinds: &[K::LuStage],
        sharded: true,
        inherent: Some((CollectiveKind::Broadcast, Operand::Output)),
        input_layout: RowSharded,
        output_layout: RowSharded,
    },
    ShardingScheme {
        id: "replicated",
        kinds: &[],
        sharded: false,
        inherent: None,
        input_layout: Replicated,
        output_layout: Replicated,
    },
];

pub fn scheme(id: &str) -> Result<&'static ShardingScheme> {
    SCHEMES.iter().find(|s| s.id == id).ok_or_else(|| Error::UnknownScheme(id.to_string()))
}

pub fn default_scheme_ids(kind: KernelKind) -> Vec<String> {
    let ids: &[&str] = match kind {
        K::Gemm => &["gemm_row", "gemm_partial", "gemm_col", "replicated"],
        K::AttentionScore => &["attn_heads", "replicated"],
        K::Softmax | K::Elementwise => &["elem_row", "elem_col", "replicated"],
        K::EmbeddingLookup => &["emb_rows", "replicated"],
        K::FftStage => &["fft_stage", "replicated"],
        K::LuStage => &["lu_panel", "replicated"],
    };
    ids.iter().map(|s| s.to_string()).collect()
}

/// Resolves a kernel's scheme list, checking each id exists and applies.
pub fn kernel_schemes(k: &Kernel) -> Result<Vec<&'static ShardingScheme>> {
    k.scheme_ids
        .iter()
        .map(|id| {
            let s = scheme(id)?;
            if !s.applies_to(k.kind) {
                return Err(Error::Validation(format!("scheme `{id}` does not apply to {:?} kernel {}", k.kind, k.name)));
            }
            Ok(s)
        })
        .collect()
}

impl Layout {
    /// Fraction of the full tensor each chip holds.
    pub fn share(self, n_tp: usize) -> f64 {
        match self {
            RowSharded | ColSharded => 1.0 / n_tp.max(1) as f64,
            Replicated | PartialSum => 1.0,
        }
    }
}

/// Collective that converts a tensor from layout `from` into `to`, if any.
pub fn conversion(from: Layout, to: Layout) -> Option<CollectiveKind> {
    match (from, to) {
        _ if from == to => None,
        (_, PartialSum) => None,
        (PartialSum, _) => Some(CollectiveKind::AllReduce),
        (Replicated, _) => None,
        (_, Replicated) => Some(CollectiveKind::AllGather),
        (RowSharded, ColSharded) | (ColSharded, RowSharded) => Some(CollectiveKind::AllToAll),
        _ => unreachable!("all layout pairs covered"),
    }
}
