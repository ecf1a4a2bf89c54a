//! File formats: splat PLY point clouds, COLMAP-style text cameras, partition
//! manifests, and per-block sub-scene sidecars.

mod colmap;
mod manifest;
mod ply;
mod sidecar;

pub use colmap::{
    load_colmap_cameras, save_colmap_cameras, DEFAULT_Z_FAR, DEFAULT_Z_NEAR,
};
pub use manifest::{
    load_manifest, write_manifest, BlockRecord, CloudSize, CutPositions, GridSize,
    PartitionManifest, Provenance, RegionBounds, MANIFEST_VERSION,
};
pub use ply::{load_splat_gaussians, load_splat_ply, save_splat_gaussians, save_splat_ply};
pub use sidecar::{load_block_subscene, save_block_subscene, sidecar_path, BlockSidecar};
