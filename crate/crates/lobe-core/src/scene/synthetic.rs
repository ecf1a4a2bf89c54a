//! Seeded synthetic "city-like" scenes: clustered Gaussian mass with
//! configurable skew, plus an aerial camera trajectory. Used by tests, the
//! acceptance suite, and the `gen-scene` CLI command.

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{CameraView, Gaussian3D, GaussianScene};
use crate::visibility::visible_set;

/// Camera path over the scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Trajectory {
    /// Cameras on a circle around the scene, all aimed at the center.
    Orbit { radius_scale: f64, height_scale: f64 },
    /// Nadir cameras on a regular grid above the scene, each seeing a patch.
    Grid { height_scale: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub gaussian_count: usize,
    pub cluster_count: usize,
    /// Sigma of the log-normal cluster masses; 0 gives equal masses.
    pub cluster_skew: f64,
    /// Fraction of Gaussians spread uniformly over the whole domain
    /// (streets/ground between the dense cores).
    pub background_fraction: f64,
    pub camera_count: usize,
    pub trajectory: Trajectory,
    /// Half-extent of the ground domain in world units.
    pub extent: f64,
    /// Cluster standard deviation as a fraction of the extent.
    pub cluster_radius_scale: f64,
    /// Minimum |x|, |y| of cluster centers as a fraction of the extent, so
    /// dense cores sit inside quadrants rather than straddling the middle.
    pub cluster_center_margin: f64,
    pub image_width: u32,
    pub image_height: u32,
    pub fov_deg: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            gaussian_count: 5000,
            cluster_count: 4,
            cluster_skew: 1.0,
            background_fraction: 0.15,
            camera_count: 36,
            trajectory: Trajectory::Grid { height_scale: 0.45 },
            extent: 10.0,
            cluster_radius_scale: 0.2,
            cluster_center_margin: 0.15,
            image_width: 192,
            image_height: 144,
            fov_deg: 50.0,
        }
    }
}

/// A generated scene together with its generation bookkeeping.
#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub scene: GaussianScene,
    pub cameras: Vec<CameraView>,
    /// Cluster index of each Gaussian; None for background points.
    pub cluster_of: Vec<Option<usize>>,
    /// Realized Gaussian count per cluster (background excluded).
    pub cluster_masses: Vec<usize>,
}

/// Deterministic clustered scene plus camera trajectory for a given seed.
pub fn generate_synthetic_scene(
    cfg: &SceneConfig,
    seed: u64,
) -> Result<(GaussianScene, Vec<CameraView>)> {
    let s = generate_synthetic_scene_detailed(cfg, seed)?;
    Ok((s.scene, s.cameras))
}

pub fn generate_synthetic_scene_detailed(cfg: &SceneConfig, seed: u64) -> Result<SyntheticScene> {
    if cfg.gaussian_count == 0 || cfg.cluster_count == 0 || cfg.camera_count == 0 {
        return Err(Error::InvalidConfig(
            "gaussian_count, cluster_count and camera_count must all be positive".into(),
        ));
    }
    let extent_ok = cfg.extent.is_finite() && cfg.extent > 0.0;
    let fov_ok = cfg.fov_deg.is_finite() && cfg.fov_deg > 0.0 && cfg.fov_deg < 180.0;
    if !extent_ok || !fov_ok {
        return Err(Error::InvalidConfig(format!(
            "extent {} / fov {} out of range",
            cfg.extent, cfg.fov_deg
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let e = cfg.extent;

    // Cluster layout: centers spread over the inner domain, log-normal masses.
    let mut centers = Vec::with_capacity(cfg.cluster_count);
    let mut stds = Vec::with_capacity(cfg.cluster_count);
    let mut weights = Vec::with_capacity(cfg.cluster_count);
    let margin = cfg.cluster_center_margin.clamp(0.0, 0.6);
    for _ in 0..cfg.cluster_count {
        let coord = |rng: &mut ChaCha8Rng| {
            let mag = rng.random_range(margin * e..0.7 * e);
            if rng.random::<bool>() {
                mag
            } else {
                -mag
            }
        };
        centers.push(Vector3::new(
            coord(&mut rng),
            coord(&mut rng),
            rng.random_range(0.0..0.08 * e),
        ));
        stds.push(cfg.cluster_radius_scale * e * rng.random_range(0.7..1.3));
        weights.push((cfg.cluster_skew * normal(&mut rng)).exp());
    }
    let total_w: f64 = weights.iter().sum();
    let mut cum = 0.0;
    let cumulative: Vec<f64> = weights
        .iter()
        .map(|w| {
            cum += w / total_w;
            cum
        })
        .collect();

    let mut gaussians = Vec::with_capacity(cfg.gaussian_count);
    let mut cluster_of = Vec::with_capacity(cfg.gaussian_count);
    let mut cluster_masses = vec![0usize; cfg.cluster_count];
    let coord_cap = 1.5 * e;
    let background = cfg.background_fraction.clamp(0.0, 1.0);
    for _ in 0..cfg.gaussian_count {
        let position = if rng.random::<f64>() < background {
            cluster_of.push(None);
            Vector3::new(
                rng.random_range(-0.8 * e..0.8 * e),
                rng.random_range(-0.8 * e..0.8 * e),
                rng.random_range(0.0..0.05 * e),
            )
        } else {
            let u: f64 = rng.random();
            let k = cumulative.iter().position(|&c| u <= c).unwrap_or(cfg.cluster_count - 1);
            cluster_of.push(Some(k));
            cluster_masses[k] += 1;
            let std = stds[k];
            Vector3::new(
                (centers[k].x + std * normal(&mut rng)).clamp(-coord_cap, coord_cap),
                (centers[k].y + std * normal(&mut rng)).clamp(-coord_cap, coord_cap),
                (centers[k].z + 0.3 * std * normal(&mut rng)).clamp(-coord_cap, coord_cap),
            )
        };
        let scale = Vector3::new(
            sample_scale(&mut rng, e),
            sample_scale(&mut rng, e),
            sample_scale(&mut rng, e),
        );
        let rotation = random_rotation(&mut rng);
        let opacity = rng.random_range(0.6..1.0);
        gaussians.push(Gaussian3D::new(position, scale, rotation, opacity)?);
    }

    let fx = cfg.image_width as f64 / 2.0 / (cfg.fov_deg.to_radians() / 2.0).tan();
    let z_near = 0.01 * e;
    let z_far = 20.0 * e;
    let mut cameras = Vec::with_capacity(cfg.camera_count);
    match cfg.trajectory {
        Trajectory::Orbit {
            radius_scale,
            height_scale,
        } => {
            let r = radius_scale * e;
            let h = height_scale * e;
            for k in 0..cfg.camera_count {
                let a = 2.0 * std::f64::consts::PI * k as f64 / cfg.camera_count as f64;
                let pos = Vector3::new(r * a.cos(), r * a.sin(), h);
                cameras.push(CameraView::looking_at(
                    k as u32 + 1,
                    pos,
                    Vector3::zeros(),
                    fx,
                    fx,
                    cfg.image_width,
                    cfg.image_height,
                    z_near,
                    z_far,
                )?);
            }
        }
        Trajectory::Grid { height_scale } => {
            let h = height_scale * e;
            let cols = (cfg.camera_count as f64).sqrt().ceil() as usize;
            let rows = cfg.camera_count.div_ceil(cols);
            let span = 0.75 * e;
            for k in 0..cfg.camera_count {
                let (ri, ci) = (k / cols, k % cols);
                let fx_pos = |idx: usize, count: usize| {
                    if count <= 1 {
                        0.0
                    } else {
                        -span + 2.0 * span * idx as f64 / (count - 1) as f64
                    }
                };
                let pos = Vector3::new(fx_pos(ci, cols), fx_pos(ri, rows), h);
                let target = Vector3::new(pos.x, pos.y, 0.0);
                cameras.push(CameraView::looking_at(
                    k as u32 + 1,
                    pos,
                    target,
                    fx,
                    fx,
                    cfg.image_width,
                    cfg.image_height,
                    z_near,
                    z_far,
                )?);
            }
        }
    }

    let scene = GaussianScene::fit(gaussians, &cameras)?;

    // Every camera must see at least one Gaussian. Cameras hovering over empty
    // ground move to a deterministic spot near the closest cluster, keeping
    // their viewing direction so footprints stay local.
    for cam in cameras.iter_mut() {
        if visible_set(cam, &scene).count_ones() > 0 {
            continue;
        }
        let pos = cam.position();
        let nearest = centers
            .iter()
            .min_by(|a, b| (*a - pos).norm().total_cmp(&(*b - pos).norm()))
            .copied()
            .unwrap();
        let angle = cam.id as f64 * 2.399963229728653; // golden angle
        let ring = 0.08 * e;
        let new_pos = Vector3::new(
            nearest.x + ring * angle.cos(),
            nearest.y + ring * angle.sin(),
            pos.z,
        );
        let target = Vector3::new(new_pos.x, new_pos.y, 0.0);
        *cam = CameraView::looking_at(
            cam.id,
            new_pos,
            target,
            cam.fx,
            cam.fy,
            cam.width,
            cam.height,
            cam.z_near,
            cam.z_far,
        )?;
        if visible_set(cam, &scene).count_ones() == 0 {
            return Err(Error::InvalidConfig(format!(
                "camera {} sees no gaussians even after repositioning",
                cam.id
            )));
        }
    }

    Ok(SyntheticScene {
        scene,
        cameras,
        cluster_of,
        cluster_masses,
    })
}

fn sample_scale(rng: &mut ChaCha8Rng, extent: f64) -> f64 {
    let base = 0.008 * extent * (0.35 * normal(rng)).exp();
    base.clamp(0.002 * extent, 0.025 * extent)
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller on two uniforms; the open interval keeps ln() finite.
    let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn random_rotation(rng: &mut ChaCha8Rng) -> UnitQuaternion<f64> {
    let q = Quaternion::new(normal(rng), normal(rng), normal(rng), normal(rng));
    UnitQuaternion::from_quaternion(q)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_for_fixed_seed() {
        let cfg = SceneConfig {
            gaussian_count: 400,
            camera_count: 9,
            ..SceneConfig::default()
        };
        let a = generate_synthetic_scene(&cfg, 1).unwrap();
        let b = generate_synthetic_scene(&cfg, 1).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        let c = generate_synthetic_scene(&cfg, 2).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn zero_counts_rejected() {
        let cfg = SceneConfig {
            gaussian_count: 0,
            ..SceneConfig::default()
        };
        assert!(matches!(
            generate_synthetic_scene(&cfg, 1),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn zero_skew_balances_clusters() {
        let cfg = SceneConfig {
            gaussian_count: 4000,
            cluster_count: 4,
            cluster_skew: 0.0,
            background_fraction: 0.0,
            camera_count: 9,
            ..SceneConfig::default()
        };
        let s = generate_synthetic_scene_detailed(&cfg, 7).unwrap();
        let expected = cfg.gaussian_count as f64 / cfg.cluster_count as f64;
        for &m in &s.cluster_masses {
            // within sampling noise: ~6 sigma of a binomial(4000, 1/4)
            assert!((m as f64 - expected).abs() < 6.0 * (expected * 0.75).sqrt());
        }
    }

    #[test]
    fn orbit_trajectory_generates() {
        let cfg = SceneConfig {
            gaussian_count: 600,
            camera_count: 12,
            trajectory: Trajectory::Orbit {
                radius_scale: 1.3,
                height_scale: 0.9,
            },
            ..SceneConfig::default()
        };
        let (scene, cams) = generate_synthetic_scene(&cfg, 3).unwrap();
        assert_eq!(cams.len(), 12);
        for cam in &cams {
            assert!(visible_set(cam, &scene).count_ones() >= 1);
        }
        let again = generate_synthetic_scene(&cfg, 3).unwrap();
        assert_eq!(again.1, cams);
    }

    #[test]
    fn every_camera_sees_something() {
        for seed in [1, 5, 11] {
            let cfg = SceneConfig {
                gaussian_count: 1000,
                camera_count: 16,
                ..SceneConfig::default()
            };
            let (scene, cams) = generate_synthetic_scene(&cfg, seed).unwrap();
            for cam in &cams {
                assert!(visible_set(cam, &scene).count_ones() >= 1);
            }
        }
    }
}
