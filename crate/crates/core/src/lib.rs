//! Differentially private k-means and k-median clustering of a fully
//! dynamic stream under continual observation.
//!
//! The pipeline, bottom up:
//!
//! - [`nets`]: hierarchical lattice nets of the unit ball
//! - [`counting`]: binary-mechanism counters and keyed histograms
//! - [`greedy`]: private net-point values and the recursive greedy
//! - [`decomposition`]: dyadic cells, the cluster partition, cluster sums
//! - [`low_dim`]: private clustering in small dimension
//! - [`high_dim`]: random projection and lifting back to the input space
//! - [`boosting`]: parallel copies and selection by private cost
//! - [`baseline`]: non-private reference solvers used as oracles
//!
//! Runnable walkthroughs live in `examples/`; `cargo run --example` lists them.

pub mod budget;
pub mod common;
pub mod counting;
pub mod decomposition;
pub mod baseline;
pub mod greedy;
pub mod low_dim;
pub mod high_dim;
pub mod boosting;
pub mod pipeline;
pub mod cli;
pub mod nets;
pub mod rng;

pub use budget::{Allocation, BudgetError, Ledger, PrivacyBudget};
pub use common::{CostKind, Normalizer, Op, Point, Solution, UpdateEvent};
pub use counting::{Horizon, KeyedHistogram, NoiseMode, NoisyCounter};
pub use nets::{NetId, NetIndex};
