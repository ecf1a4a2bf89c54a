//! Block sub-scene serialization: a splat PLY holding the Gaussians plus a
//! JSON sidecar with the per-Gaussian bookkeeping, the owning cell, and the
//! scene frame (so a sub-scene file is self-contained for densification).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::blocks::BlockSubScene;
use crate::error::{Error, Result};
use crate::io::ply::{load_splat_gaussians, save_splat_gaussians};
use crate::scene::{BlockRegion, GridFrame};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockSidecar {
    pub block_id: usize,
    pub origin_index: Vec<i64>,
    pub in_block: Vec<bool>,
    pub densify_eligible: Vec<bool>,
    pub cell: BlockRegion,
    pub frame: GridFrame,
}

/// `foo.ply` -> `foo.sidecar.json`.
pub fn sidecar_path(ply_path: &Path) -> PathBuf {
    ply_path.with_extension("sidecar.json")
}

pub fn save_block_subscene(sub: &BlockSubScene, ply_path: impl AsRef<Path>) -> Result<()> {
    let ply_path = ply_path.as_ref();
    save_splat_gaussians(&sub.gaussians, ply_path)?;
    let sidecar = BlockSidecar {
        block_id: sub.block_id,
        origin_index: sub.origin_index.clone(),
        in_block: sub.in_block.clone(),
        densify_eligible: sub.densify_eligible.clone(),
        cell: sub.cell.clone(),
        frame: sub.frame.clone(),
    };
    let path = sidecar_path(ply_path);
    let mut bytes = serde_json::to_vec_pretty(&sidecar)?;
    bytes.push(b'\n');
    fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
}

pub fn load_block_subscene(ply_path: impl AsRef<Path>) -> Result<BlockSubScene> {
    let ply_path = ply_path.as_ref();
    let gaussians = load_splat_gaussians(ply_path)?;
    let path = sidecar_path(ply_path);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let sc: BlockSidecar = serde_json::from_str(&text).map_err(|e| Error::Schema(e.to_string()))?;
    if sc.origin_index.len() != gaussians.len()
        || sc.in_block.len() != gaussians.len()
        || sc.densify_eligible.len() != gaussians.len()
    {
        return Err(Error::Schema(format!(
            "sidecar {} covers {} gaussians, PLY has {}",
            path.display(),
            sc.origin_index.len(),
            gaussians.len()
        )));
    }
    Ok(BlockSubScene {
        block_id: sc.block_id,
        gaussians,
        origin_index: sc.origin_index,
        in_block: sc.in_block,
        densify_eligible: sc.densify_eligible,
        cell: sc.cell,
        frame: sc.frame,
    })
}
