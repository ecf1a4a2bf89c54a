//! Load-balance-aware grid-cut optimization: a Gaussian-process surrogate
//! proposes cut positions by expected improvement, minimizing the maximum
//! per-block visible-Gaussian count.

mod acquisition;
mod bounds;
mod gp;
mod optimize;

pub use acquisition::{acquisition_ei, expected_improvement, halton_in_bounds, propose_candidate};
pub use bounds::CutBounds;
pub use gp::{gp_fit, GpSurrogate};
pub use optimize::{
    init_uniform_cuts, objective, optimize_partition, BoState, ObjectiveEval, PartitionConfig,
    PartitionContext, PartitionOutcome,
};
