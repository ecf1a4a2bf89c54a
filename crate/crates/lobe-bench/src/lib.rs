//! Shared fixtures for the pipeline benchmarks.

use lobe_core::scene::{
    generate_synthetic_scene, CameraView, GaussianScene, SceneConfig, Trajectory,
};

/// A mid-sized clustered scene with a nadir camera grid.
pub fn bench_scene(gaussians: usize, cameras: usize) -> (GaussianScene, Vec<CameraView>) {
    let cfg = SceneConfig {
        gaussian_count: gaussians,
        cluster_count: 4,
        cluster_skew: 1.2,
        camera_count: cameras,
        trajectory: Trajectory::Grid { height_scale: 0.45 },
        ..SceneConfig::default()
    };
    generate_synthetic_scene(&cfg, 42).expect("bench scene generation")
}
