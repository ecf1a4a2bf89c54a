//! Fast O(N) camera-to-block assignment: render an alpha-blended depth map per
//! camera, back-project it to a contracted ground-plane point cloud, then
//! assign each camera to the blocks where enough of its cloud lands.
//!
//! Rendering happens exactly once per camera; every partition-optimizer
//! iteration reuses the clouds with cheap point-in-box tests.

use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::{Matrix2, Matrix2x3, Point3};

use crate::error::{Error, Result};
use crate::scene::{block_region, BlockRegion, CameraView, GaussianScene, GridCuts, GridFrame};
use crate::visibility::is_visible;

/// Per-pixel transmittance below which compositing stops.
pub const TRANSMITTANCE_STOP: f64 = 1e-4;

/// Anti-aliasing dilation added to projected covariance diagonals (px^2).
pub const COV_DILATION: f64 = 0.3;

/// Default weight floor for back-projection: pixels dominated by background
/// are not turned into cloud points.
pub const DEFAULT_WEIGHT_FLOOR: f64 = 0.1;

/// Expected-depth map at a (possibly downscaled) resolution, along with the
/// intrinsics it was rendered with so it can be unprojected on its own.
#[derive(Debug, Clone)]
pub struct DepthMap {
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Alpha-blended expected depth per pixel; 0 where nothing was composited.
    pub depth: Vec<f64>,
    /// Accumulated blending weight per pixel, in \[0, 1\].
    pub weight: Vec<f64>,
}

/// Renders the alpha-blended depth of `scene` from `cam` at `1/downscale`
/// resolution.
///
/// Culling uses the shared [`is_visible`] predicate on the full-resolution
/// camera; survivors are composited front-to-back by center depth with EWA
/// projected covariances (dilated by +0.3 px^2, never singular).
pub fn render_depth(cam: &CameraView, scene: &GaussianScene, downscale: u32) -> Result<DepthMap> {
    if downscale == 0 {
        return Err(Error::InvalidInput("downscale must be >= 1".into()));
    }
    let s = downscale as f64;
    let w = (cam.width / downscale).max(1);
    let h = (cam.height / downscale).max(1);
    let (fx, fy, cx, cy) = (cam.fx / s, cam.fy / s, cam.cx / s, cam.cy / s);
    let npix = (w * h) as usize;
    let mut depth = vec![0.0f64; npix];
    let mut weight = vec![0.0f64; npix];
    let mut trans = vec![1.0f64; npix];

    let mut survivors: Vec<(usize, nalgebra::Vector3<f64>)> = Vec::new();
    for (i, g) in scene.gaussians().iter().enumerate() {
        if is_visible(cam, g) {
            let pc = cam.world_to_cam.transform_point(&Point3::from(g.position));
            survivors.push((i, pc.coords));
        }
    }
    // Stable sort: ties keep scene order, so a cropped sub-scene composites in
    // the exact same order as the full scene.
    survivors.sort_by(|a, b| a.1.z.total_cmp(&b.1.z));

    let rot = *cam.world_to_cam.rotation.to_rotation_matrix().matrix();
    for (gi, pc) in survivors {
        let g = &scene.gaussians()[gi];
        let z = pc.z;
        let u = fx * pc.x / z + cx;
        let v = fy * pc.y / z + cy;

        let cov_cam = rot * g.covariance() * rot.transpose();
        let jac = Matrix2x3::new(
            fx / z,
            0.0,
            -fx * pc.x / (z * z),
            0.0,
            fy / z,
            -fy * pc.y / (z * z),
        );
        let cov2 = jac * cov_cam * jac.transpose() + Matrix2::identity() * COV_DILATION;
        let (a, b, c) = (cov2[(0, 0)], cov2[(0, 1)], cov2[(1, 1)]);
        // det >= 0.3*(a+c) - 0.09 > 0: the dilation keeps this invertible
        let det = a * c - b * b;
        let (ia, ib, ic) = (c / det, -b / det, a / det);

        let rx = 3.0 * a.sqrt();
        let ry = 3.0 * c.sqrt();
        let x0 = (u - rx).floor().max(0.0) as i64;
        let x1 = (u + rx).ceil().min(w as f64 - 1.0) as i64;
        let y0 = (v - ry).floor().max(0.0) as i64;
        let y1 = (v + ry).ceil().min(h as f64 - 1.0) as i64;
        if x0 > x1 || y0 > y1 || u + rx < 0.0 || v + ry < 0.0 {
            continue;
        }
        for py in y0..=y1 {
            for px in x0..=x1 {
                let idx = (py as u32 * w + px as u32) as usize;
                let t = trans[idx];
                if t < TRANSMITTANCE_STOP {
                    continue;
                }
                let dx = px as f64 + 0.5 - u;
                let dy = py as f64 + 0.5 - v;
                let e = 0.5 * (ia * dx * dx + 2.0 * ib * dx * dy + ic * dy * dy);
                if e > 4.5 {
                    continue;
                }
                let alpha = g.opacity * (-e).exp();
                let wgt = alpha * t;
                depth[idx] += z * wgt;
                weight[idx] = (weight[idx] + wgt).min(1.0);
                trans[idx] = t * (1.0 - alpha);
            }
        }
    }

    Ok(DepthMap {
        width: w,
        height: h,
        fx,
        fy,
        cx,
        cy,
        depth,
        weight,
    })
}

/// [`render_depth`] with an invocation counter, used to check the one-render-
/// per-camera complexity claim over a whole partition run.
#[derive(Debug)]
pub struct DepthRenderer {
    downscale: u32,
    count: AtomicU64,
}

impl DepthRenderer {
    pub fn new(downscale: u32) -> Result<Self> {
        if downscale == 0 {
            return Err(Error::InvalidInput("downscale must be >= 1".into()));
        }
        Ok(Self {
            downscale,
            count: AtomicU64::new(0),
        })
    }

    pub fn downscale(&self) -> u32 {
        self.downscale
    }

    pub fn render(&self, cam: &CameraView, scene: &GaussianScene) -> DepthMap {
        self.count.fetch_add(1, Ordering::Relaxed);
        render_depth(cam, scene, self.downscale).expect("downscale validated at construction")
    }

    /// Number of depth renders performed so far.
    pub fn render_count(&self) -> u64 {
        self.count.load(Ordering::Relaxed)
    }
}

/// A camera's back-projected depth points in contracted grid coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct BackprojectedCloud {
    pub camera_id: u32,
    pub points: Vec<[f64; 2]>,
}

impl BackprojectedCloud {
    /// Number of cloud points (K).
    pub fn k(&self) -> usize {
        self.points.len()
    }
}

/// Unprojects every `stride`-th pixel whose blending weight reaches `eps_w`,
/// contracts it, and maps it into grid coordinates (clamped to \[0,1\]^2).
pub fn backproject(
    cam: &CameraView,
    dmap: &DepthMap,
    stride: u32,
    eps_w: f64,
    frame: &GridFrame,
) -> Result<BackprojectedCloud> {
    if stride == 0 {
        return Err(Error::InvalidInput("stride must be >= 1".into()));
    }
    let mut points = Vec::new();
    for py in (0..dmap.height).step_by(stride as usize) {
        for px in (0..dmap.width).step_by(stride as usize) {
            let idx = (py * dmap.width + px) as usize;
            if dmap.weight[idx] < eps_w {
                continue;
            }
            let d = dmap.depth[idx];
            let u = px as f64 + 0.5;
            let v = py as f64 + 0.5;
            let x = (u - dmap.cx) / dmap.fx * d;
            let y = (v - dmap.cy) / dmap.fy * d;
            let world = cam
                .world_to_cam
                .inverse_transform_point(&Point3::new(x, y, d))
                .coords;
            points.push(frame.grid_coords(&world));
        }
    }
    Ok(BackprojectedCloud {
        camera_id: cam.id,
        points,
    })
}

/// Fraction of cloud points inside the region; 0 for an empty cloud.
pub fn visibility_ratio(cloud: &BackprojectedCloud, region: &BlockRegion) -> f64 {
    if cloud.points.is_empty() {
        return 0.0;
    }
    let inside = cloud.points.iter().filter(|p| region.contains(**p)).count();
    inside as f64 / cloud.k() as f64
}

/// Assigns cameras to blocks: camera c joins block b iff its visibility ratio
/// over the enlarged region of b reaches `tau`. Cameras with empty clouds are
/// assigned nowhere. Returns one sorted id list per block, indexed by
/// block_id - 1; cameras may appear in several blocks or in none.
pub fn assign_cameras(
    clouds: &[BackprojectedCloud],
    cuts: &GridCuts,
    delta: [f64; 2],
    tau: f64,
) -> Result<Vec<Vec<u32>>> {
    let mut out = Vec::with_capacity(cuts.block_count());
    for i in 1..=cuts.rows() {
        for j in 1..=cuts.cols() {
            let region = block_region(cuts, i, j, delta)?;
            let mut ids: Vec<u32> = clouds
                .iter()
                .filter(|c| c.k() > 0 && visibility_ratio(c, &region) >= tau)
                .map(|c| c.camera_id)
                .collect();
            ids.sort_unstable();
            out.push(ids);
        }
    }
    Ok(out)
}
