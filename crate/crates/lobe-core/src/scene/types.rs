//! Core geometric types: Gaussian primitives, pinhole cameras, grid cuts, block regions.

use nalgebra::{Isometry3, Matrix3, Point3, Rotation3, Translation3, UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One anisotropic Gaussian primitive: position, per-axis standard deviations,
/// orientation, and opacity.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian3D {
    pub position: Vector3<f64>,
    /// Per-axis standard deviations in world units, strictly positive.
    pub scale: Vector3<f64>,
    pub rotation: UnitQuaternion<f64>,
    /// Opacity in \[0, 1\].
    pub opacity: f64,
}

impl Gaussian3D {
    pub fn new(
        position: Vector3<f64>,
        scale: Vector3<f64>,
        rotation: UnitQuaternion<f64>,
        opacity: f64,
    ) -> Result<Self> {
        if !position.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidInput("non-finite gaussian position".into()));
        }
        if !scale.iter().all(|c| c.is_finite() && *c > 0.0) {
            return Err(Error::InvalidInput(format!(
                "gaussian scale must be strictly positive and finite, got {:?}",
                scale
            )));
        }
        if !(0.0..=1.0).contains(&opacity) {
            return Err(Error::InvalidInput(format!(
                "opacity {opacity} outside [0, 1]"
            )));
        }
        Ok(Self {
            position,
            scale,
            rotation,
            opacity,
        })
    }

    /// Largest per-axis standard deviation; the isotropic bound used for culling.
    pub fn max_scale(&self) -> f64 {
        self.scale.x.max(self.scale.y).max(self.scale.z)
    }

    /// World-space 3x3 covariance R diag(s^2) R^T.
    pub fn covariance(&self) -> Matrix3<f64> {
        let r = self.rotation.to_rotation_matrix();
        let s = Matrix3::from_diagonal(&self.scale.map(|v| v * v));
        r * s * r.transpose()
    }
}

/// A pinhole camera view: intrinsics, image size, and a rigid world-to-camera transform.
///
/// Camera convention: x right, y down, z forward; a point at camera-frame
/// `(x, y, z)` projects to pixel `(fx*x/z + cx, fy*y/z + cy)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraView {
    pub id: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub world_to_cam: Isometry3<f64>,
    pub z_near: f64,
    pub z_far: f64,
}

impl CameraView {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: u32,
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
        world_to_cam: Isometry3<f64>,
        z_near: f64,
        z_far: f64,
    ) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0) {
            return Err(Error::InvalidInput(format!(
                "focal lengths must be positive, got fx={fx}, fy={fy}"
            )));
        }
        if !(0.0 < z_near && z_near < z_far) {
            return Err(Error::InvalidInput(format!(
                "need 0 < z_near < z_far, got z_near={z_near}, z_far={z_far}"
            )));
        }
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput("zero image dimension".into()));
        }
        Ok(Self {
            id,
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            world_to_cam,
            z_near,
            z_far,
        })
    }

    /// Camera center in world coordinates.
    pub fn position(&self) -> Vector3<f64> {
        self.world_to_cam
            .inverse_transform_point(&Point3::origin())
            .coords
    }

    /// Projects a world point. Returns pixel coordinates and camera-frame depth,
    /// or `None` when the point is at or behind the near plane (z <= z_near).
    pub fn project_point(&self, p: &Vector3<f64>) -> Option<(Vector2<f64>, f64)> {
        let pc = self.world_to_cam.transform_point(&Point3::from(*p));
        let z = pc.z;
        if z <= self.z_near {
            return None;
        }
        let u = self.fx * pc.x / z + self.cx;
        let v = self.fy * pc.y / z + self.cy;
        Some((Vector2::new(u, v), z))
    }

    /// Inverse of `project_point`: pixel plus camera-frame depth back to a world point.
    pub fn unproject_pixel(&self, u: f64, v: f64, depth: f64) -> Vector3<f64> {
        let x = (u - self.cx) / self.fx * depth;
        let y = (v - self.cy) / self.fy * depth;
        self.world_to_cam
            .inverse_transform_point(&Point3::new(x, y, depth))
            .coords
    }

    /// Builds a camera at `position` aimed at `target` (y-down pinhole convention).
    #[allow(clippy::too_many_arguments)]
    pub fn looking_at(
        id: u32,
        position: Vector3<f64>,
        target: Vector3<f64>,
        fx: f64,
        fy: f64,
        width: u32,
        height: u32,
        z_near: f64,
        z_far: f64,
    ) -> Result<Self> {
        let forward = (target - position)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::InvalidInput("camera target coincides with position".into()))?;
        let up_hint = if forward.z.abs() > 0.999 {
            Vector3::y()
        } else {
            Vector3::z()
        };
        let right = up_hint.cross(&forward).normalize();
        let down = forward.cross(&right);
        let rot = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let rotation = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(rot));
        let translation = Translation3::from(-(rot * position));
        let world_to_cam = Isometry3::from_parts(translation, rotation);
        Self::new(
            id,
            fx,
            fy,
            width as f64 / 2.0,
            height as f64 / 2.0,
            width,
            height,
            world_to_cam,
            z_near,
            z_far,
        )
    }
}

/// Monotone cut positions defining an m x n block grid in contracted space.
///
/// `v` holds the m-1 row cuts and `h` the n-1 column cuts, all strictly
/// increasing inside the open interval (0, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct GridCuts {
    m: usize,
    n: usize,
    v: Vec<f64>,
    h: Vec<f64>,
}

impl GridCuts {
    pub fn new(m: usize, n: usize, v: Vec<f64>, h: Vec<f64>) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(Error::InvalidCuts(format!("grid must be >=1x1, got {m}x{n}")));
        }
        if v.len() != m - 1 || h.len() != n - 1 {
            return Err(Error::InvalidCuts(format!(
                "expected {} row cuts and {} column cuts, got {} and {}",
                m - 1,
                n - 1,
                v.len(),
                h.len()
            )));
        }
        for cuts in [&v, &h] {
            for (k, &c) in cuts.iter().enumerate() {
                if !(c > 0.0 && c < 1.0) {
                    return Err(Error::InvalidCuts(format!("cut {c} outside open (0, 1)")));
                }
                if k > 0 && cuts[k - 1] >= c {
                    return Err(Error::InvalidCuts(format!(
                        "cuts not strictly increasing: {} >= {c}",
                        cuts[k - 1]
                    )));
                }
            }
        }
        Ok(Self { m, n, v, h })
    }

    pub fn rows(&self) -> usize {
        self.m
    }

    pub fn cols(&self) -> usize {
        self.n
    }

    pub fn block_count(&self) -> usize {
        self.m * self.n
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn h(&self) -> &[f64] {
        &self.h
    }

    /// Row boundaries including the implicit v_0 = 0 and v_m = 1.
    pub fn row_bounds(&self, i: usize) -> (f64, f64) {
        let lo = if i == 1 { 0.0 } else { self.v[i - 2] };
        let hi = if i == self.m { 1.0 } else { self.v[i - 1] };
        (lo, hi)
    }

    /// Column boundaries including the implicit h_0 = 0 and h_n = 1.
    pub fn col_bounds(&self, j: usize) -> (f64, f64) {
        let lo = if j == 1 { 0.0 } else { self.h[j - 2] };
        let hi = if j == self.n { 1.0 } else { self.h[j - 1] };
        (lo, hi)
    }

    /// Flat decision vector [v..., h...] as consumed by the cut optimizer.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = self.v.clone();
        out.extend_from_slice(&self.h);
        out
    }
}

/// One block's region in contracted \[0,1\]^2 space: the grid cell expanded by
/// (delta_v, delta_h) and clamped to the domain.
///
/// Intervals are half-open [lo, hi) per axis, except that a side clamped to
/// the domain edge 1.0 is closed so that delta = 0 regions tile \[0,1\]^2 exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockRegion {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    /// 1-based block id, b = (i-1)*n + j.
    pub block_id: usize,
    /// 1-based row index.
    pub row: usize,
    /// 1-based column index.
    pub col: usize,
}

impl BlockRegion {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        for ((&v, &lo), &hi) in p.iter().zip(&self.lo).zip(&self.hi) {
            if v < lo {
                return false;
            }
            let closed_hi = hi >= 1.0;
            if v > hi || (v == hi && !closed_hi) {
                return false;
            }
        }
        true
    }

    /// Width x height of the region.
    pub fn area(&self) -> f64 {
        (self.hi[0] - self.lo[0]) * (self.hi[1] - self.lo[1])
    }
}

/// The enlarged region of block (i, j): cell bounds padded by `delta` and
/// clamped to \[0,1\]^2. Rows index the first (v) axis, columns the second (h).
pub fn block_region(cuts: &GridCuts, i: usize, j: usize, delta: [f64; 2]) -> Result<BlockRegion> {
    if i < 1 || i > cuts.rows() || j < 1 || j > cuts.cols() {
        return Err(Error::InvalidIndex(format!(
            "(i={i}, j={j}) outside {}x{} grid",
            cuts.rows(),
            cuts.cols()
        )));
    }
    if delta[0] < 0.0 || delta[1] < 0.0 {
        return Err(Error::InvalidInput(format!("negative delta {:?}", delta)));
    }
    let (vlo, vhi) = cuts.row_bounds(i);
    let (hlo, hhi) = cuts.col_bounds(j);
    Ok(BlockRegion {
        lo: [(vlo - delta[0]).max(0.0), (hlo - delta[1]).max(0.0)],
        hi: [(vhi + delta[0]).min(1.0), (hhi + delta[1]).min(1.0)],
        block_id: (i - 1) * cuts.cols() + j,
        row: i,
        col: j,
    })
}

/// Region enlargement scaled to the grid: (delta_scale/m, delta_scale/n).
pub fn default_delta(m: usize, n: usize, delta_scale: f64) -> [f64; 2] {
    [delta_scale / m as f64, delta_scale / n as f64]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn identity_cam(fx: f64, cx: f64) -> CameraView {
        CameraView::new(
            0,
            fx,
            fx,
            cx,
            cx,
            100,
            100,
            Isometry3::identity(),
            1e-6,
            1e6,
        )
        .unwrap()
    }

    #[test]
    fn project_on_optical_axis() {
        let cam = identity_cam(100.0, 50.0);
        let (px, depth) = cam.project_point(&Vector3::new(0.0, 0.0, 7.0)).unwrap();
        assert_relative_eq!(px.x, 50.0);
        assert_relative_eq!(px.y, 50.0);
        assert_relative_eq!(depth, 7.0);
    }

    #[test]
    fn project_hand_pinhole() {
        // z = 2, x = 1, fx = 100, cx = 50 -> u = 100*1/2 + 50 = 100
        let cam = identity_cam(100.0, 50.0);
        let (px, _) = cam.project_point(&Vector3::new(1.0, 0.0, 2.0)).unwrap();
        assert_relative_eq!(px.x, 100.0);
    }

    #[test]
    fn project_behind_camera() {
        let cam = identity_cam(100.0, 50.0);
        assert!(cam.project_point(&Vector3::new(0.3, 0.1, 0.0)).is_none());
        assert!(cam.project_point(&Vector3::new(0.3, 0.1, -2.0)).is_none());
    }

    #[test]
    fn unproject_inverts_project() {
        let cam = CameraView::looking_at(
            3,
            Vector3::new(2.0, -1.0, 5.0),
            Vector3::new(0.0, 0.5, 0.0),
            120.0,
            115.0,
            160,
            120,
            0.01,
            1e4,
        )
        .unwrap();
        let p = Vector3::new(0.4, 0.7, -0.2);
        let (px, depth) = cam.project_point(&p).unwrap();
        let back = cam.unproject_pixel(px.x, px.y, depth);
        assert_relative_eq!(back, p, max_relative = 1e-9);
    }

    #[test]
    fn looking_at_rotation_orthonormal() {
        let cam = CameraView::looking_at(
            0,
            Vector3::new(0.0, 0.0, 8.0),
            Vector3::zeros(),
            100.0,
            100.0,
            64,
            64,
            0.01,
            100.0,
        )
        .unwrap();
        let r = cam.world_to_cam.rotation.to_rotation_matrix();
        let should_be_eye = r.matrix() * r.matrix().transpose();
        assert_relative_eq!(should_be_eye, Matrix3::identity(), epsilon = 1e-10);
    }

    #[test]
    fn grid_cuts_validation() {
        assert!(GridCuts::new(2, 2, vec![0.5], vec![0.5]).is_ok());
        assert!(GridCuts::new(2, 2, vec![0.0], vec![0.5]).is_err());
        assert!(GridCuts::new(3, 1, vec![0.6, 0.4], vec![]).is_err());
        assert!(GridCuts::new(0, 2, vec![], vec![0.5]).is_err());
    }

    #[test]
    fn block_region_uniform_2x2() {
        let cuts = GridCuts::new(2, 2, vec![0.5], vec![0.5]).unwrap();
        let r = block_region(&cuts, 1, 1, [0.0, 0.0]).unwrap();
        assert_eq!(r.lo, [0.0, 0.0]);
        assert_eq!(r.hi, [0.5, 0.5]);
        assert_eq!(r.block_id, 1);

        let r = block_region(&cuts, 1, 1, [0.05, 0.05]).unwrap();
        assert_relative_eq!(r.hi[0], 0.55);
        assert_relative_eq!(r.hi[1], 0.55);
        assert_eq!(r.lo, [0.0, 0.0]);

        assert_eq!(default_delta(2, 2, 0.1), [0.05, 0.05]);
    }

    #[test]
    fn block_region_bad_index() {
        let cuts = GridCuts::new(2, 2, vec![0.5], vec![0.5]).unwrap();
        assert!(block_region(&cuts, 0, 1, [0.0, 0.0]).is_err());
        assert!(block_region(&cuts, 3, 1, [0.0, 0.0]).is_err());
    }

    #[test]
    fn half_open_membership() {
        let cuts = GridCuts::new(2, 2, vec![0.5], vec![0.5]).unwrap();
        let lower = block_region(&cuts, 1, 1, [0.0, 0.0]).unwrap();
        let upper = block_region(&cuts, 2, 1, [0.0, 0.0]).unwrap();
        // interior cut line belongs to the higher-index block only
        assert!(!lower.contains([0.5, 0.25]));
        assert!(upper.contains([0.5, 0.25]));
        // domain edge 1.0 belongs to the last block
        assert!(upper.contains([1.0, 0.25]));
    }

    #[test]
    fn delta_zero_regions_tile_domain() {
        let cuts = GridCuts::new(3, 2, vec![0.31, 0.62], vec![0.47]).unwrap();
        let regions: Vec<_> = (1..=3)
            .flat_map(|i| (1..=2).map(move |j| (i, j)))
            .map(|(i, j)| block_region(&cuts, i, j, [0.0, 0.0]).unwrap())
            .collect();
        let steps = 1000;
        for a in 0..=steps {
            for b in 0..=steps {
                let p = [a as f64 / steps as f64, b as f64 / steps as f64];
                let hits = regions.iter().filter(|r| r.contains(p)).count();
                assert_eq!(hits, 1, "point {:?} in {} regions", p, hits);
            }
        }
    }

    #[test]
    fn gaussian_validation() {
        let q = UnitQuaternion::identity();
        assert!(Gaussian3D::new(Vector3::zeros(), Vector3::new(1.0, 1.0, 1.0), q, 0.5).is_ok());
        assert!(Gaussian3D::new(Vector3::zeros(), Vector3::new(0.0, 1.0, 1.0), q, 0.5).is_err());
        assert!(Gaussian3D::new(Vector3::zeros(), Vector3::new(1.0, 1.0, 1.0), q, 1.5).is_err());
        assert!(
            Gaussian3D::new(Vector3::new(f64::NAN, 0.0, 0.0), Vector3::new(1.0, 1.0, 1.0), q, 0.5)
                .is_err()
        );
    }
}
