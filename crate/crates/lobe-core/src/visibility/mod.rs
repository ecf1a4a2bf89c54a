//! Per-camera visible-Gaussian sets, the camera x Gaussian visibility matrix,
//! and per-block load statistics.
//!
//! A single culling predicate ([`is_visible`]) decides what "visible" means
//! everywhere: here for the counters, and in the depth renderer's culling
//! stage, which is what makes visibility cropping exactly render-preserving.

mod bitset;

pub use bitset::IndexBitset;

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{block_region, BlockRegion, CameraView, GaussianScene, GridCuts};

/// Gaussians more transparent than this are culled everywhere.
pub const OPACITY_EPS: f64 = 0.005;

/// The shared culling predicate: center depth inside (z_near, z_far), projected
/// center within the image rectangle dilated by the isotropic 3-sigma footprint
/// bound `3*max(scale)/depth*max(fx, fy)` pixels, and opacity >= 0.005.
pub fn is_visible(cam: &CameraView, g: &crate::scene::Gaussian3D) -> bool {
    if g.opacity < OPACITY_EPS {
        return false;
    }
    match cam.project_point(&g.position) {
        None => false,
        Some((px, z)) => {
            if z >= cam.z_far {
                return false;
            }
            let r = 3.0 * g.max_scale() / z * cam.fx.max(cam.fy);
            px.x >= -r && px.x <= cam.width as f64 + r && px.y >= -r && px.y <= cam.height as f64 + r
        }
    }
}

/// Indices of all Gaussians visible from `cam`.
pub fn visible_set(cam: &CameraView, scene: &GaussianScene) -> IndexBitset {
    let mut out = IndexBitset::new(scene.len());
    for (i, g) in scene.gaussians().iter().enumerate() {
        if is_visible(cam, g) {
            out.set(i);
        }
    }
    out
}

/// Camera x Gaussian boolean membership with one bitset row per camera.
#[derive(Debug, Clone)]
pub struct VisibilityMatrix {
    rows: Vec<IndexBitset>,
    camera_ids: Vec<u32>,
    gaussian_count: usize,
    index_of: HashMap<u32, usize>,
}

impl VisibilityMatrix {
    pub fn rows(&self) -> &[IndexBitset] {
        &self.rows
    }

    pub fn camera_ids(&self) -> &[u32] {
        &self.camera_ids
    }

    pub fn gaussian_count(&self) -> usize {
        self.gaussian_count
    }

    pub fn row_for_camera(&self, camera_id: u32) -> Result<&IndexBitset> {
        self.index_of
            .get(&camera_id)
            .map(|&i| &self.rows[i])
            .ok_or(Error::UnknownCameraId(camera_id))
    }
}

/// Builds the visibility matrix, one row per camera in input order.
/// Rows are computed independently in parallel.
pub fn visibility_matrix(scene: &GaussianScene, cameras: &[CameraView]) -> Result<VisibilityMatrix> {
    if cameras.is_empty() {
        return Err(Error::InvalidInput("empty camera list".into()));
    }
    let rows: Vec<IndexBitset> = cameras
        .par_iter()
        .map(|cam| visible_set(cam, scene))
        .collect();
    let camera_ids: Vec<u32> = cameras.iter().map(|c| c.id).collect();
    let index_of = camera_ids
        .iter()
        .enumerate()
        .map(|(i, &id)| (id, i))
        .collect();
    Ok(VisibilityMatrix {
        rows,
        camera_ids,
        gaussian_count: scene.len(),
        index_of,
    })
}

/// Gaussians whose cached contracted center lies inside `region` (half-open).
pub fn gaussians_in_block(scene: &GaussianScene, region: &BlockRegion) -> IndexBitset {
    let mut out = IndexBitset::new(scene.len());
    for (i, xy) in scene.contracted_xy().iter().enumerate() {
        if region.contains(*xy) {
            out.set(i);
        }
    }
    out
}

/// Union of the visibility rows of the given cameras: the block's G_vis set.
pub fn visible_gaussians_for_block(
    matrix: &VisibilityMatrix,
    camera_ids: &[u32],
) -> Result<IndexBitset> {
    let mut out = IndexBitset::new(matrix.gaussian_count());
    for &id in camera_ids {
        out.union_with(matrix.row_for_camera(id)?);
    }
    Ok(out)
}

/// Per-block load statistics: the five quantities used as runtime predictors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockLoadStats {
    pub block_id: usize,
    /// Area of the un-enlarged grid cell in contracted space.
    pub area: f64,
    pub camera_count: usize,
    /// Gaussians whose centers lie strictly inside the cell.
    pub g_blk: u64,
    /// Gaussians visible from at least one assigned camera.
    pub g_vis: u64,
    /// g_vis / camera_count, or 0 for camera-less blocks.
    pub g_avgvis: f64,
}

/// Computes stats for every block of the grid. `assignment[b-1]` holds the
/// camera ids of block b; empty sets are allowed. Areas use the raw delta=0
/// cell even when assignment was built from enlarged regions.
pub fn block_stats(
    scene: &GaussianScene,
    matrix: &VisibilityMatrix,
    cuts: &GridCuts,
    assignment: &[Vec<u32>],
) -> Result<Vec<BlockLoadStats>> {
    if assignment.len() != cuts.block_count() {
        return Err(Error::InvalidInput(format!(
            "assignment covers {} blocks, grid has {}",
            assignment.len(),
            cuts.block_count()
        )));
    }
    let mut out = Vec::with_capacity(cuts.block_count());
    for i in 1..=cuts.rows() {
        for j in 1..=cuts.cols() {
            let cell = block_region(cuts, i, j, [0.0, 0.0])?;
            let cams = &assignment[cell.block_id - 1];
            let g_blk = gaussians_in_block(scene, &cell).count_ones() as u64;
            let g_vis = visible_gaussians_for_block(matrix, cams)?.count_ones() as u64;
            let g_avgvis = if cams.is_empty() {
                0.0
            } else {
                g_vis as f64 / cams.len() as f64
            };
            out.push(BlockLoadStats {
                block_id: cell.block_id,
                area: cell.area(),
                camera_count: cams.len(),
                g_blk,
                g_vis,
                g_avgvis,
            });
        }
    }
    Ok(out)
}
