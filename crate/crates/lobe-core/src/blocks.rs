//! Per-block preparation and post-processing: visibility cropping, selective
//! densification (as a toy split/clone simulator), out-of-block pruning, and
//! the final merge.

use std::collections::HashSet;

use nalgebra::Vector3;
use rand::Rng;

use crate::error::{Error, Result};
use crate::scene::{BlockRegion, Gaussian3D, GaussianScene, GridFrame};
use crate::visibility::{visible_gaussians_for_block, VisibilityMatrix};

/// A block's working set: visible Gaussians copied out of the scene, with
/// per-Gaussian bookkeeping flags.
///
/// `origin_index[i]` is the index of Gaussian i in the original scene, or -1
/// for primitives created by densification. `in_block` records whether the
/// center was inside the un-enlarged cell when the primitive was created (or
/// last moved); densification eligibility is restricted to those.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSubScene {
    pub block_id: usize,
    pub gaussians: Vec<Gaussian3D>,
    pub origin_index: Vec<i64>,
    pub in_block: Vec<bool>,
    pub densify_eligible: Vec<bool>,
    /// The delta = 0 cell this block owns.
    pub cell: BlockRegion,
    pub frame: GridFrame,
}

impl BlockSubScene {
    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }

    /// View of the sub-scene as a renderable scene in the parent frame.
    pub fn to_scene(&self) -> GaussianScene {
        GaussianScene::with_frame(self.gaussians.clone(), self.frame.clone())
    }
}

/// Crops the scene to the Gaussians visible from at least one camera in
/// `camera_ids`, flagging the ones whose centers lie inside the delta = 0
/// `cell`. An empty camera set yields an empty sub-scene with a warning.
pub fn visibility_crop(
    scene: &GaussianScene,
    matrix: &VisibilityMatrix,
    camera_ids: &[u32],
    cell: &BlockRegion,
) -> Result<BlockSubScene> {
    if camera_ids.is_empty() {
        log::warn!(
            "block {}: no cameras assigned, cropping to an empty sub-scene",
            cell.block_id
        );
    }
    let visible = visible_gaussians_for_block(matrix, camera_ids)?;
    let mut gaussians = Vec::with_capacity(visible.count_ones());
    let mut origin_index = Vec::with_capacity(gaussians.capacity());
    let mut in_block = Vec::with_capacity(gaussians.capacity());
    for i in visible.iter_ones() {
        gaussians.push(scene.gaussians()[i].clone());
        origin_index.push(i as i64);
        in_block.push(cell.contains(scene.contracted_xy()[i]));
    }
    Ok(BlockSubScene {
        block_id: cell.block_id,
        gaussians,
        origin_index,
        densify_eligible: in_block.clone(),
        in_block,
        cell: cell.clone(),
        frame: scene.frame().clone(),
    })
}

/// Which Gaussians may densify: exactly the strictly-in-block ones.
pub fn selective_densify_mask(sub: &BlockSubScene) -> Vec<bool> {
    sub.densify_eligible.clone()
}

/// Split/clone constants for the toy densification simulator.
#[derive(Debug, Clone, Copy)]
pub struct DensifyParams {
    /// Gradient-proxy threshold above which an eligible Gaussian densifies.
    pub grad_threshold: f64,
    /// Max-scale threshold separating clones (small) from splits (large).
    pub scale_split: f64,
    /// Positional jitter applied to both clone copies, in units of scale.
    pub clone_jitter: f64,
    /// Children of a split get scale / this factor.
    pub split_scale_factor: f64,
}

impl DensifyParams {
    pub fn new(grad_threshold: f64, scale_split: f64) -> Self {
        Self {
            grad_threshold,
            scale_split,
            clone_jitter: 0.1,
            split_scale_factor: 1.6,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DensifyStats {
    pub clones: usize,
    pub splits: usize,
}

/// One simulated densification step.
///
/// Eligible Gaussians (mask true) with `grad_mag >= grad_threshold` either
/// clone (duplicate with jittered positions) when small, or split into two
/// children with scale divided by the split factor, sampled inside the parent
/// footprint. Created or moved primitives get origin_index = -1 (children) and
/// fresh in-cell flags from their own centers. Everything else is copied
/// through untouched.
pub fn simulate_densify_step(
    sub: &BlockSubScene,
    grad_mag: &[f64],
    params: &DensifyParams,
    rng: &mut impl Rng,
) -> Result<(BlockSubScene, DensifyStats)> {
    if grad_mag.len() != sub.len() {
        return Err(Error::InvalidInput(format!(
            "grad_mag has {} entries for {} gaussians",
            grad_mag.len(),
            sub.len()
        )));
    }
    let mut out = BlockSubScene {
        block_id: sub.block_id,
        gaussians: Vec::with_capacity(sub.len()),
        origin_index: Vec::with_capacity(sub.len()),
        in_block: Vec::with_capacity(sub.len()),
        densify_eligible: Vec::with_capacity(sub.len()),
        cell: sub.cell.clone(),
        frame: sub.frame.clone(),
    };
    let mut stats = DensifyStats::default();

    let push_fresh = |g: Gaussian3D, origin: i64, out: &mut BlockSubScene| {
        let inside = out.cell.contains(out.frame.grid_coords(&g.position));
        out.gaussians.push(g);
        out.origin_index.push(origin);
        out.in_block.push(inside);
        out.densify_eligible.push(inside);
    };

    for (i, g) in sub.gaussians.iter().enumerate() {
        if !(sub.densify_eligible[i] && grad_mag[i] >= params.grad_threshold) {
            out.gaussians.push(g.clone());
            out.origin_index.push(sub.origin_index[i]);
            out.in_block.push(sub.in_block[i]);
            out.densify_eligible.push(sub.densify_eligible[i]);
            continue;
        }
        let rot = g.rotation.to_rotation_matrix();
        if g.max_scale() < params.scale_split {
            stats.clones += 1;
            for copy in 0..2 {
                let jitter = rot
                    * Vector3::new(
                        params.clone_jitter * g.scale.x * normal(rng),
                        params.clone_jitter * g.scale.y * normal(rng),
                        params.clone_jitter * g.scale.z * normal(rng),
                    );
                let mut child = g.clone();
                child.position += jitter;
                let origin = if copy == 0 { sub.origin_index[i] } else { -1 };
                push_fresh(child, origin, &mut out);
            }
        } else {
            stats.splits += 1;
            for _ in 0..2 {
                let offset = rot
                    * Vector3::new(
                        g.scale.x * normal(rng),
                        g.scale.y * normal(rng),
                        g.scale.z * normal(rng),
                    );
                let child = Gaussian3D {
                    position: g.position + offset,
                    scale: g.scale / params.split_scale_factor,
                    rotation: g.rotation,
                    opacity: g.opacity,
                };
                push_fresh(child, -1, &mut out);
            }
        }
    }
    Ok((out, stats))
}

fn normal(rng: &mut impl Rng) -> f64 {
    let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Keeps only Gaussians whose current centers lie inside the block's
/// un-enlarged half-open cell.
pub fn prune_outside(sub: &BlockSubScene) -> BlockSubScene {
    let mut out = BlockSubScene {
        block_id: sub.block_id,
        gaussians: Vec::new(),
        origin_index: Vec::new(),
        in_block: Vec::new(),
        densify_eligible: Vec::new(),
        cell: sub.cell.clone(),
        frame: sub.frame.clone(),
    };
    for i in 0..sub.len() {
        let xy = sub.frame.grid_coords(&sub.gaussians[i].position);
        if sub.cell.contains(xy) {
            out.gaussians.push(sub.gaussians[i].clone());
            out.origin_index.push(sub.origin_index[i]);
            out.in_block.push(true);
            out.densify_eligible.push(sub.densify_eligible[i]);
        }
    }
    out
}

/// Concatenates pruned sub-scenes in block order into one scene.
///
/// Errors if an original-scene index appears in more than one block, which
/// happens exactly when pruning was run with enlarged (delta > 0) cells.
pub fn merge_blocks(subs: &[BlockSubScene]) -> Result<GaussianScene> {
    if subs.is_empty() {
        return Err(Error::InvalidInput("no sub-scenes to merge".into()));
    }
    let frame = &subs[0].frame;
    for s in subs {
        if s.frame != *frame {
            return Err(Error::InvalidInput(format!(
                "block {} uses a different scene frame",
                s.block_id
            )));
        }
    }
    let mut order: Vec<usize> = (0..subs.len()).collect();
    order.sort_by_key(|&i| subs[i].block_id);

    let mut seen = HashSet::new();
    let mut gaussians = Vec::with_capacity(subs.iter().map(|s| s.len()).sum());
    for &si in &order {
        for (g, &origin) in subs[si].gaussians.iter().zip(&subs[si].origin_index) {
            if origin >= 0 && !seen.insert(origin) {
                return Err(Error::MergeIntegrity(origin));
            }
            gaussians.push(g.clone());
        }
    }
    Ok(GaussianScene::with_frame(gaussians, frame.clone()))
}
