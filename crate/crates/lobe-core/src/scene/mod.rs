//! Geometric types, coordinate contraction, block geometry, and synthetic scenes.

mod frame;
mod synthetic;
mod types;

pub use frame::{contract_unit, GridFrame};
pub use synthetic::{
    generate_synthetic_scene, generate_synthetic_scene_detailed, SceneConfig, SyntheticScene,
    Trajectory,
};
pub use types::{block_region, default_delta, BlockRegion, CameraView, Gaussian3D, GridCuts};

use crate::error::Result;

/// An ordered collection of Gaussian primitives with cached contracted
/// ground-plane coordinates. Immutable after construction; index `i` always
/// refers to the same primitive.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianScene {
    gaussians: Vec<Gaussian3D>,
    contracted_xy: Vec<[f64; 2]>,
    frame: GridFrame,
}

impl GaussianScene {
    /// Builds a scene by fitting a fresh frame: normalization anchored on the
    /// cameras when given (falling back to the Gaussians themselves), affine
    /// ranges tightened so the cached coordinates span \[0,1\] per axis.
    pub fn fit(gaussians: Vec<Gaussian3D>, cameras: &[CameraView]) -> Result<Self> {
        let frame = GridFrame::fit(&gaussians, cameras, None)?;
        Ok(Self::with_frame(gaussians, frame))
    }

    /// Same as [`GaussianScene::fit`] with explicit ground axes.
    pub fn fit_with_axes(
        gaussians: Vec<Gaussian3D>,
        cameras: &[CameraView],
        axes: [nalgebra::Vector3<f64>; 2],
    ) -> Result<Self> {
        let frame = GridFrame::fit(&gaussians, cameras, Some(axes))?;
        Ok(Self::with_frame(gaussians, frame))
    }

    /// Builds a scene reusing an existing frame (merged or cropped sub-scenes
    /// must stay in the frame of the scene they came from). Coordinates are
    /// clamped to \[0,1\]^2 but not re-tightened.
    pub fn with_frame(gaussians: Vec<Gaussian3D>, frame: GridFrame) -> Self {
        let contracted_xy = gaussians.iter().map(|g| frame.grid_coords(&g.position)).collect();
        Self {
            gaussians,
            contracted_xy,
            frame,
        }
    }

    /// Re-anchors the frame on the given cameras, recomputing the cache.
    pub fn refit(self, cameras: &[CameraView]) -> Result<Self> {
        Self::fit(self.gaussians, cameras)
    }

    pub fn gaussians(&self) -> &[Gaussian3D] {
        &self.gaussians
    }

    /// Cached per-Gaussian grid coordinates in \[0,1\]^2.
    pub fn contracted_xy(&self) -> &[[f64; 2]] {
        &self.contracted_xy
    }

    pub fn frame(&self) -> &GridFrame {
        &self.frame
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }
}
