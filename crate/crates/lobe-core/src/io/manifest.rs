//! Partition manifest: everything needed to reproduce and apply a partition,
//! as a versioned JSON document.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{block_region, GridCuts};
use crate::visibility::BlockLoadStats;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSize {
    pub m: usize,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutPositions {
    pub v: Vec<f64>,
    pub h: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionBounds {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockRecord {
    pub block_id: usize,
    /// Enlarged (delta-padded) region the block's cameras were selected on.
    pub region: RegionBounds,
    /// Sorted, duplicate-free camera ids.
    pub camera_ids: Vec<u32>,
    pub g_blk: u64,
    pub g_vis: u64,
    pub g_avgvis: f64,
    /// Area of the un-enlarged cell.
    pub area: f64,
    pub camera_count: usize,
}

impl BlockRecord {
    pub fn from_stats(stats: &BlockLoadStats, region: RegionBounds, camera_ids: Vec<u32>) -> Self {
        Self {
            block_id: stats.block_id,
            region,
            camera_ids,
            g_blk: stats.g_blk,
            g_vis: stats.g_vis,
            g_avgvis: stats.g_avgvis,
            area: stats.area,
            camera_count: stats.camera_count,
        }
    }
}

/// Per-camera cloud size (K), recorded so the sampling density is auditable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudSize {
    pub camera_id: u32,
    pub points: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    /// Requested evaluation budget L.
    pub iterations: u32,
    /// Objective value of every evaluation, in order; length <= iterations.
    pub objective_history: Vec<f64>,
    /// Depth renders performed over the whole run (one per camera).
    pub depth_renders: u64,
    pub depth_downscale: u32,
    pub backproject_stride: u32,
    pub weight_floor: f64,
    pub cloud_sizes: Vec<CloudSize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionManifest {
    pub version: u32,
    pub grid: GridSize,
    pub cuts: CutPositions,
    pub delta: [f64; 2],
    pub tau: f64,
    pub blocks: Vec<BlockRecord>,
    pub provenance: Provenance,
}

impl PartitionManifest {
    pub fn grid_cuts(&self) -> Result<GridCuts> {
        GridCuts::new(self.grid.m, self.grid.n, self.cuts.v.clone(), self.cuts.h.clone())
    }

    /// Checks the internal consistency invariants.
    pub fn validate(&self) -> Result<()> {
        if self.version != MANIFEST_VERSION {
            return Err(Error::Schema(format!(
                "manifest version {} unsupported (this build reads version {MANIFEST_VERSION})",
                self.version
            )));
        }
        if self.grid.m == 0 || self.grid.n == 0 {
            return Err(Error::Schema("grid must be >= 1x1".into()));
        }
        let cuts = self.grid_cuts()?;
        if self.blocks.len() != cuts.block_count() {
            return Err(Error::Schema(format!(
                "{} block records for a {}x{} grid",
                self.blocks.len(),
                self.grid.m,
                self.grid.n
            )));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::Schema(format!("tau {} outside [0, 1]", self.tau)));
        }
        if self.delta[0] < 0.0 || self.delta[1] < 0.0 {
            return Err(Error::Schema(format!("negative delta {:?}", self.delta)));
        }
        if self.provenance.objective_history.len() > self.provenance.iterations as usize {
            return Err(Error::Schema(format!(
                "objective history has {} entries for {} iterations",
                self.provenance.objective_history.len(),
                self.provenance.iterations
            )));
        }
        for (idx, b) in self.blocks.iter().enumerate() {
            if b.block_id != idx + 1 {
                return Err(Error::Schema(format!(
                    "block record {idx} has id {} (expected {})",
                    b.block_id,
                    idx + 1
                )));
            }
            if b.camera_ids.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Schema(format!(
                    "block {}: camera ids not sorted/unique",
                    b.block_id
                )));
            }
            if b.camera_count != b.camera_ids.len() {
                return Err(Error::Schema(format!(
                    "block {}: camera_count {} != {} ids",
                    b.block_id,
                    b.camera_count,
                    b.camera_ids.len()
                )));
            }
            let i = (b.block_id - 1) / self.grid.n + 1;
            let j = (b.block_id - 1) % self.grid.n + 1;
            let expect = block_region(&cuts, i, j, self.delta)?;
            if expect.lo != b.region.lo || expect.hi != b.region.hi {
                return Err(Error::Schema(format!(
                    "block {}: region bounds inconsistent with cuts + delta",
                    b.block_id
                )));
            }
        }
        Ok(())
    }

    pub fn to_json_bytes(&self) -> Result<Vec<u8>> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        Ok(bytes)
    }
}

/// Validates and writes the manifest as pretty JSON (deterministic bytes).
pub fn write_manifest(manifest: &PartitionManifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    manifest.validate()?;
    fs::write(path, manifest.to_json_bytes()?).map_err(|e| Error::io(path, e))
}

/// Reads, version-checks, and validates a manifest.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<PartitionManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let version = value.get("version").and_then(|v| v.as_u64());
    match version {
        Some(v) if v == MANIFEST_VERSION as u64 => {}
        Some(v) => {
            return Err(Error::Schema(format!(
                "manifest version {v} unsupported (this build reads version {MANIFEST_VERSION})"
            )))
        }
        None => return Err(Error::Schema("missing version field".into())),
    }
    let manifest: PartitionManifest =
        serde_json::from_value(value).map_err(|e| Error::Schema(e.to_string()))?;
    manifest.validate()?;
    Ok(manifest)
}
