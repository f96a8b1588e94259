//! Two-level mixed-integer mapping of dataflow graphs onto multi-chip
//! accelerator systems.
//!
//! The inter-chip level picks a tensor-parallel sharding scheme per kernel
//! and splits the graph into pipeline stages; the intra-chip level fuses each
//! stage's kernels into on-chip partitions and allocates compute tiles.

pub mod collectives;
pub mod dse;
pub mod error;
pub mod graph;
pub mod interchip;
pub mod intrachip;
pub mod mapmat;
pub mod oracle;
pub mod milp;
pub mod pipeline;
pub mod sharding;
pub mod system;

pub use error::{Error, Result};
