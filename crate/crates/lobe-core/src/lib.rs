//! Load-balance-aware scene partitioning for block-parallel Gaussian-splat
//! training.
//!
//! The pipeline: map an unbounded splat scene into contracted \[0,1\]^2 ground
//! coordinates, render one alpha-blended depth map per camera and back-project
//! it once, then optimize grid-cut positions with a Gaussian-process surrogate
//! so the maximum per-block visible-Gaussian count (the runtime proxy) is
//! minimized. Per block, the scene is visibility-cropped, selectively
//! densified, pruned, and merged back.

pub mod blocks;
pub mod error;
pub mod io;
pub mod partition;
pub mod report;
pub mod scene;
pub mod select;
pub mod visibility;

pub use error::{Error, Result};
pub use scene::{
    block_region, default_delta, BlockRegion, CameraView, Gaussian3D, GaussianScene, GridCuts,
    GridFrame, SceneConfig, Trajectory,
};
pub use visibility::{BlockLoadStats, IndexBitset, VisibilityMatrix};
