//! Unbounded-to-contracted coordinate mapping and the ground-plane grid frame.
//!
//! World points are first normalized by a (center, radius) pair, then passed
//! through a spherical contraction that is the identity on the unit ball and
//! maps all of space into the radius-2 ball. The contracted points are
//! projected onto two orthonormal ground axes and affinely rescaled so the
//! scene's bounding rectangle becomes \[0,1\]^2, the domain the grid cuts live in.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::types::{CameraView, Gaussian3D};

/// Spherical contraction in a normalized frame: identity inside the unit ball,
/// `(2 - 1/|x|) * x/|x|` outside. Continuous, injective, image inside radius 2.
pub fn contract_unit(x: Vector3<f64>) -> Vector3<f64> {
    let n = x.norm();
    if n <= 1.0 {
        x
    } else {
        x * ((2.0 - 1.0 / n) / n)
    }
}

/// Normalization plus ground-plane mapping shared by a scene and everything
/// derived from it (visibility, back-projected clouds, block sub-scenes).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFrame {
    /// Center of the normalized frame (robust centroid of camera positions).
    pub center: Vector3<f64>,
    /// Scale of the normalized frame (90th-percentile distance to center).
    pub radius: f64,
    /// First ground axis in contracted space (grid rows / v cuts).
    pub axis_u: Vector3<f64>,
    /// Second ground axis in contracted space (grid columns / h cuts).
    pub axis_v: Vector3<f64>,
    /// Origin of the partition plane in contracted space.
    pub origin: Vector3<f64>,
    /// Affine range mapped to \[0,1\] on the u axis.
    pub u_range: [f64; 2],
    /// Affine range mapped to \[0,1\] on the v axis.
    pub v_range: [f64; 2],
}

impl GridFrame {
    /// Identity frame: useful for empty scenes and unit tests.
    pub fn identity() -> Self {
        Self {
            center: Vector3::zeros(),
            radius: 1.0,
            axis_u: Vector3::x(),
            axis_v: Vector3::y(),
            origin: Vector3::zeros(),
            u_range: [0.0, 1.0],
            v_range: [0.0, 1.0],
        }
    }

    /// Contracts a world point into the radius-2 ball of the normalized frame.
    ///
    /// Identity on the unit ball; injective; errors on non-finite input.
    pub fn contract_point(&self, p: &Vector3<f64>) -> Result<Vector3<f64>> {
        if !p.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite point {:?}", p)));
        }
        Ok(self.contract(p))
    }

    #[inline]
    pub(crate) fn contract(&self, p: &Vector3<f64>) -> Vector3<f64> {
        contract_unit((p - self.center) / self.radius)
    }

    /// Projects a contracted point onto the ground axes (no affine rescale).
    fn plane_coords(&self, q: &Vector3<f64>) -> [f64; 2] {
        let d = q - self.origin;
        [d.dot(&self.axis_u), d.dot(&self.axis_v)]
    }

    /// Full world-to-grid map: contract, project onto the plane, rescale to
    /// \[0,1\]^2 and clamp. A degenerate axis (zero range) maps to 0.5.
    pub fn grid_coords(&self, p: &Vector3<f64>) -> [f64; 2] {
        let q = self.contract(p);
        let pc = self.plane_coords(&q);
        [
            rescale(pc[0], self.u_range),
            rescale(pc[1], self.v_range),
        ]
    }

    /// Fits a frame from camera positions (falling back to Gaussian positions
    /// when no cameras are given) and tightens the affine ranges to the
    /// scene's Gaussians so their grid coordinates span \[0,1\] per axis.
    pub fn fit(
        gaussians: &[Gaussian3D],
        cameras: &[CameraView],
        axes_override: Option<[Vector3<f64>; 2]>,
    ) -> Result<Self> {
        if gaussians.is_empty() {
            return Ok(Self::identity());
        }
        let anchors: Vec<Vector3<f64>> = if cameras.is_empty() {
            gaussians.iter().map(|g| g.position).collect()
        } else {
            cameras.iter().map(|c| c.position()).collect()
        };
        let center = per_axis_median(&anchors);
        let radius = percentile_90_distance(&anchors, &center).max(1e-9);
        let (axis_u, axis_v) = match axes_override {
            Some([u, v]) => orthonormalize(u, v)?,
            None => principal_plane_axes(&anchors),
        };
        let mut frame = Self {
            center,
            radius,
            axis_u,
            axis_v,
            origin: Vector3::zeros(),
            u_range: [0.0, 1.0],
            v_range: [0.0, 1.0],
        };

        let mut u_min = f64::INFINITY;
        let mut u_max = f64::NEG_INFINITY;
        let mut v_min = f64::INFINITY;
        let mut v_max = f64::NEG_INFINITY;
        for g in gaussians {
            let pc = frame.plane_coords(&frame.contract(&g.position));
            u_min = u_min.min(pc[0]);
            u_max = u_max.max(pc[0]);
            v_min = v_min.min(pc[1]);
            v_max = v_max.max(pc[1]);
        }
        if u_max - u_min <= 0.0 && v_max - v_min <= 0.0 {
            return Err(Error::DegenerateScene(
                "all gaussians project to a single ground-plane point".into(),
            ));
        }
        frame.u_range = [u_min, u_max];
        frame.v_range = [v_min, v_max];
        Ok(frame)
    }
}

#[inline]
fn rescale(x: f64, range: [f64; 2]) -> f64 {
    let den = range[1] - range[0];
    if den <= 0.0 {
        return 0.5;
    }
    ((x - range[0]) / den).clamp(0.0, 1.0)
}

fn per_axis_median(points: &[Vector3<f64>]) -> Vector3<f64> {
    let mut out = Vector3::zeros();
    for axis in 0..3 {
        let mut vals: Vec<f64> = points.iter().map(|p| p[axis]).collect();
        vals.sort_by(f64::total_cmp);
        let n = vals.len();
        out[axis] = if n % 2 == 1 {
            vals[n / 2]
        } else {
            0.5 * (vals[n / 2 - 1] + vals[n / 2])
        };
    }
    out
}

fn percentile_90_distance(points: &[Vector3<f64>], center: &Vector3<f64>) -> f64 {
    let mut dists: Vec<f64> = points.iter().map(|p| (p - center).norm()).collect();
    dists.sort_by(f64::total_cmp);
    let idx = ((dists.len() - 1) as f64 * 0.9).round() as usize;
    dists[idx]
}

/// The principal plane of the anchor positions, with its in-plane basis
/// aligned to the world axes.
///
/// The smallest-variance direction is the plane normal (for aerial rigs and
/// city scenes: up). Inside the plane any rotation partitions equally well,
/// but symmetric camera grids make the top-two eigenvectors degenerate and
/// arbitrarily rotated, so the first axis snaps to the projection of world X
/// (or Y when X is normal to the plane). Falls back to world X/Y for
/// degenerate (e.g. single-point) distributions.
fn principal_plane_axes(points: &[Vector3<f64>]) -> (Vector3<f64>, Vector3<f64>) {
    let n = points.len() as f64;
    let mean: Vector3<f64> = points.iter().sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - mean;
        cov += d * d.transpose();
    }
    cov /= n;
    let eig = cov.symmetric_eigen();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    if eig.eigenvalues[order[1]] <= 1e-12 {
        return (Vector3::x(), Vector3::y());
    }
    let normal = fix_sign(eig.eigenvectors.column(order[2]).into_owned());
    let candidate = |axis: Vector3<f64>| {
        let in_plane = axis - normal * axis.dot(&normal);
        in_plane.try_normalize(1e-6)
    };
    let u = candidate(Vector3::x())
        .or_else(|| candidate(Vector3::y()))
        .map(fix_sign)
        .unwrap_or_else(Vector3::x);
    let v = fix_sign(normal.cross(&u));
    (u, v)
}

/// Flips an axis so its largest-magnitude component is positive.
fn fix_sign(v: Vector3<f64>) -> Vector3<f64> {
    let mut dominant = 0;
    for axis in 1..3 {
        if v[axis].abs() > v[dominant].abs() {
            dominant = axis;
        }
    }
    if v[dominant] < 0.0 {
        -v
    } else {
        v
    }
}

fn orthonormalize(u: Vector3<f64>, v: Vector3<f64>) -> Result<(Vector3<f64>, Vector3<f64>)> {
    let u = u
        .try_normalize(1e-12)
        .ok_or_else(|| Error::InvalidInput("zero-length ground axis".into()))?;
    let w = v - u * u.dot(&v);
    let w = w
        .try_normalize(1e-12)
        .ok_or_else(|| Error::InvalidInput("ground axes are collinear".into()))?;
    Ok((u, w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn contract_identity_inside_unit_ball() {
        let p = Vector3::new(0.3, -0.2, 0.3); // norm 0.469...
        assert_eq!(contract_unit(p), p);
        let boundary = Vector3::new(1.0, 0.0, 0.0);
        assert_eq!(contract_unit(boundary), boundary);
    }

    #[test]
    fn contract_far_point() {
        // norm 4 -> norm 2 - 1/4 = 1.75 along the same direction
        let p = Vector3::new(0.0, 4.0, 0.0);
        let c = contract_unit(p);
        assert_relative_eq!(c.norm(), 1.75, epsilon = 1e-12);
        assert_relative_eq!(c, Vector3::new(0.0, 1.75, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn contract_rejects_non_finite() {
        let f = GridFrame::identity();
        assert!(f.contract_point(&Vector3::new(f64::INFINITY, 0.0, 0.0)).is_err());
        assert!(f.contract_point(&Vector3::new(0.0, f64::NAN, 0.0)).is_err());
    }

    proptest! {
        #[test]
        fn contract_norm_below_two(x in -1e6f64..1e6, y in -1e6f64..1e6, z in -1e6f64..1e6) {
            let c = contract_unit(Vector3::new(x, y, z));
            prop_assert!(c.norm() < 2.0);
        }

        #[test]
        fn contract_injective(
            a in -50.0f64..50.0, b in -50.0f64..50.0, c in -50.0f64..50.0,
            d in -50.0f64..50.0, e in -50.0f64..50.0, f in -50.0f64..50.0,
        ) {
            let p = Vector3::new(a, b, c);
            let q = Vector3::new(d, e, f);
            prop_assume!((p - q).norm() > 1e-9);
            let (cp, cq) = (contract_unit(p), contract_unit(q));
            prop_assert!((cp - cq).norm() > 0.0);
        }
    }

    fn gaussian_at(p: Vector3<f64>) -> Gaussian3D {
        Gaussian3D::new(
            p,
            Vector3::new(0.1, 0.1, 0.1),
            nalgebra::UnitQuaternion::identity(),
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn grid_coords_affine_map_collinear_axis() {
        // u coordinates 0, 5, 10 must map to 0.0, 0.5, 1.0 on that axis
        let gs = vec![
            gaussian_at(Vector3::new(0.0, 0.0, 0.0)),
            gaussian_at(Vector3::new(0.5, 0.3, 0.0)),
            gaussian_at(Vector3::new(1.0, 0.7, 0.0)),
        ];
        // With all anchors inside the unit ball the contraction is the identity,
        // so the grid map is affine and preserves per-axis ratios.
        let frame = GridFrame::fit(&gs, &[], Some([Vector3::x(), Vector3::y()])).unwrap();
        let us: Vec<f64> = gs.iter().map(|g| frame.grid_coords(&g.position)[0]).collect();
        assert_relative_eq!(us[0], 0.0, epsilon = 1e-12);
        assert_relative_eq!(us[1], 0.5, epsilon = 1e-12);
        assert_relative_eq!(us[2], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn fit_tight_normalization() {
        let gs = vec![
            gaussian_at(Vector3::new(-3.0, -2.0, 0.1)),
            gaussian_at(Vector3::new(1.0, 0.5, 0.0)),
            gaussian_at(Vector3::new(4.0, 2.5, -0.1)),
        ];
        let frame = GridFrame::fit(&gs, &[], Some([Vector3::x(), Vector3::y()])).unwrap();
        let coords: Vec<[f64; 2]> = gs.iter().map(|g| frame.grid_coords(&g.position)).collect();
        for axis in 0..2 {
            let min = coords.iter().map(|c| c[axis]).fold(f64::INFINITY, f64::min);
            let max = coords.iter().map(|c| c[axis]).fold(f64::NEG_INFINITY, f64::max);
            assert_relative_eq!(min, 0.0, epsilon = 1e-12);
            assert_relative_eq!(max, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn fit_degenerate_scene_errors() {
        let gs = vec![gaussian_at(Vector3::zeros()), gaussian_at(Vector3::zeros())];
        assert!(matches!(
            GridFrame::fit(&gs, &[], None),
            Err(Error::DegenerateScene(_))
        ));
    }

    #[test]
    fn corners_map_to_corners() {
        let gs = vec![
            gaussian_at(Vector3::new(-1.0, -1.0, 0.0)),
            gaussian_at(Vector3::new(1.0, 1.0, 0.0)),
        ];
        let frame = GridFrame::fit(&gs, &[], Some([Vector3::x(), Vector3::y()])).unwrap();
        assert_eq!(frame.grid_coords(&gs[0].position), [0.0, 0.0]);
        assert_eq!(frame.grid_coords(&gs[1].position), [1.0, 1.0]);
    }
}
