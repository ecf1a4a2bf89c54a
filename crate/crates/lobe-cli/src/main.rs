//! `lobe`: scene partitioning, camera assignment, visibility cropping, and
//! load reports for block-parallel splat training.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use lobe_core::blocks::{
    merge_blocks, prune_outside, simulate_densify_step, visibility_crop, DensifyParams,
};
use lobe_core::io::{
    load_block_subscene, load_colmap_cameras, load_manifest, load_splat_ply, save_block_subscene,
    save_colmap_cameras, save_splat_ply, write_manifest, PartitionManifest,
};
use lobe_core::partition::{optimize_partition, PartitionConfig, PartitionContext};
use lobe_core::report::{
    compare_partitions, comparison_to_csv, emit_report, fit_runtime_model, pearson_r,
    E2EReport, ReportFormat, RuntimeModel, Strategy,
};
use lobe_core::scene::{
    block_region, generate_synthetic_scene, CameraView, GaussianScene, SceneConfig,
};
use lobe_core::select::assign_cameras;
use lobe_core::visibility::BlockLoadStats;

#[derive(Parser)]
#[command(
    name = "lobe",
    version,
    about = "Load-balance-aware scene partitioning for block-parallel splat training"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a clustered synthetic scene plus a camera trajectory.
    GenScene {
        /// Scene config JSON (see README for the schema).
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output splat PLY.
        #[arg(long)]
        out_scene: PathBuf,
        /// Output directory for cameras.txt / images.txt.
        #[arg(long)]
        out_cams: PathBuf,
    },
    /// Optimize grid cuts to balance per-block visible-Gaussian counts.
    Partition {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        cams: PathBuf,
        /// Grid size as MxN, e.g. 2x2.
        #[arg(long)]
        grid: String,
        /// Evaluation budget L.
        #[arg(long, default_value_t = 100)]
        iters: usize,
        #[arg(long, default_value_t = 0.15)]
        tau: f64,
        /// Region enlargement scale; delta = (scale/m, scale/n).
        #[arg(long, default_value_t = 0.1)]
        delta_scale: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output manifest JSON.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4)]
        depth_downscale: u32,
        /// Back-projection pixel stride on top of the downscale.
        #[arg(long, default_value_t = 2)]
        stride: u32,
    },
    /// Recompute camera sets for a manifest and verify they match.
    Assign {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        cams: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Write one block's visibility-cropped sub-scene (PLY + sidecar JSON).
    Crop {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        cams: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// 1-based block id.
        #[arg(long)]
        block: usize,
        /// Output PLY path; the sidecar lands next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the toy selective-densification simulator on a block sub-scene.
    DensifySim {
        /// Block PLY (sidecar JSON expected next to it).
        #[arg(long)]
        block: PathBuf,
        #[arg(long, default_value_t = 1)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Gradient-proxy threshold.
        #[arg(long, default_value_t = 0.5)]
        tau_grad: f64,
        /// Clone/split scale threshold in world units; defaults to
        /// 0.02 x the scene normalization radius.
        #[arg(long)]
        scale_split: Option<f64>,
    },
    /// Prune block sub-scenes to their cells and merge them into one scene.
    Merge {
        #[arg(long)]
        manifest: PathBuf,
        /// Directory containing the per-block PLY + sidecar pairs.
        #[arg(long)]
        blocks_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Emit a load/runtime report for a partition manifest.
    Report {
        #[arg(long)]
        manifest: PathBuf,
        /// Runtime-model JSON path, or "fit" to fit one on simulated
        /// per-block timings.
        #[arg(long, default_value = "fit")]
        runtime_model: String,
        #[arg(long, default_value = "json")]
        format: String,
        #[arg(long)]
        out: PathBuf,
        /// Relative noise for simulated timings when fitting.
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Coarse-stage minutes for the end-to-end total.
        #[arg(long, default_value_t = 0.0)]
        t_coarse: f64,
        /// Partition-stage minutes for the end-to-end total.
        #[arg(long, default_value_t = 0.0)]
        t_partition: f64,
    },
    /// Compare partitioning strategies on predicted fine-stage runtime.
    Compare {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        cams: PathBuf,
        #[arg(long)]
        grid: String,
        /// Comma-separated: uniform,equal-camera,optimized.
        #[arg(long, default_value = "uniform,equal-camera,optimized")]
        strategies: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 50)]
        iters: usize,
        #[arg(long, default_value_t = 0.15)]
        tau: f64,
        #[arg(long, default_value_t = 0.1)]
        delta_scale: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Runtime-model JSON path; omitted means a default linear proxy.
        #[arg(long)]
        runtime_model: Option<PathBuf>,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Ok(v) = std::env::var("LOBE_THREADS") {
        let n: usize = v
            .parse()
            .with_context(|| format!("LOBE_THREADS must be a positive integer, got `{v}`"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("failed to size the worker pool")?;
    }
    match Cli::parse().command {
        Command::GenScene {
            config,
            seed,
            out_scene,
            out_cams,
        } => gen_scene(&config, seed, &out_scene, &out_cams),
        Command::Partition {
            scene,
            cams,
            grid,
            iters,
            tau,
            delta_scale,
            seed,
            out,
            depth_downscale,
            stride,
        } => partition(
            &scene,
            &cams,
            &grid,
            iters,
            tau,
            delta_scale,
            seed,
            &out,
            depth_downscale,
            stride,
        ),
        Command::Assign {
            scene,
            cams,
            manifest,
        } => assign(&scene, &cams, &manifest),
        Command::Crop {
            scene,
            cams,
            manifest,
            block,
            out,
        } => crop(&scene, &cams, &manifest, block, &out),
        Command::DensifySim {
            block,
            steps,
            seed,
            out,
            tau_grad,
            scale_split,
        } => densify_sim(&block, steps, seed, &out, tau_grad, scale_split),
        Command::Merge {
            manifest,
            blocks_dir,
            out,
        } => merge(&manifest, &blocks_dir, &out),
        Command::Report {
            manifest,
            runtime_model,
            format,
            out,
            noise,
            seed,
            t_coarse,
            t_partition,
        } => report(
            &manifest,
            &runtime_model,
            &format,
            &out,
            noise,
            seed,
            t_coarse,
            t_partition,
        ),
        Command::Compare {
            scene,
            cams,
            grid,
            strategies,
            out,
            iters,
            tau,
            delta_scale,
            seed,
            runtime_model,
        } => compare(
            &scene,
            &cams,
            &grid,
            &strategies,
            &out,
            iters,
            tau,
            delta_scale,
            seed,
            runtime_model.as_deref(),
        ),
    }
}

fn parse_grid(s: &str) -> Result<(usize, usize)> {
    let (m, n) = s
        .split_once(['x', 'X'])
        .with_context(|| format!("grid must look like MxN, got `{s}`"))?;
    let m: usize = m.trim().parse().context("bad grid rows")?;
    let n: usize = n.trim().parse().context("bad grid columns")?;
    if m == 0 || n == 0 {
        bail!("grid must be at least 1x1");
    }
    Ok((m, n))
}

fn load_scene_and_cameras(scene: &Path, cams: &Path) -> Result<(GaussianScene, Vec<CameraView>)> {
    let cameras = load_colmap_cameras(cams)?;
    let scene = load_splat_ply(scene)?.refit(&cameras)?;
    Ok((scene, cameras))
}

fn gen_scene(config: &Path, seed: u64, out_scene: &Path, out_cams: &Path) -> Result<()> {
    let text = std::fs::read_to_string(config)
        .with_context(|| format!("reading {}", config.display()))?;
    let cfg: SceneConfig = serde_json::from_str(&text).context("parsing scene config")?;
    let (scene, cameras) = generate_synthetic_scene(&cfg, seed)?;
    save_splat_ply(&scene, out_scene)?;
    save_colmap_cameras(out_cams, &cameras)?;
    println!(
        "wrote {} gaussians to {} and {} cameras to {}",
        scene.len(),
        out_scene.display(),
        cameras.len(),
        out_cams.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn partition(
    scene_path: &Path,
    cams_path: &Path,
    grid: &str,
    iters: usize,
    tau: f64,
    delta_scale: f64,
    seed: u64,
    out: &Path,
    depth_downscale: u32,
    stride: u32,
) -> Result<()> {
    let (m, n) = parse_grid(grid)?;
    let (scene, cameras) = load_scene_and_cameras(scene_path, cams_path)?;
    let cfg = PartitionConfig {
        m,
        n,
        iters,
        tau,
        delta_scale,
        seed,
        depth_downscale,
        backproject_stride: stride,
        weight_floor: 0.1,
    };
    let start = Instant::now();
    let outcome = optimize_partition(&scene, &cameras, &cfg)?;
    let elapsed = start.elapsed();
    write_manifest(&outcome.manifest, out)?;

    let uniform_y = outcome.state.ys[0];
    println!(
        "partitioned {} gaussians / {} cameras into {}x{} blocks in {:.1}s",
        scene.len(),
        cameras.len(),
        m,
        n,
        elapsed.as_secs_f64()
    );
    println!(
        "evaluations: {}  depth renders: {}  uniform max G_vis: {}  best max G_vis: {}",
        outcome.state.ys.len(),
        outcome.depth_renders,
        uniform_y,
        outcome.state.best_y
    );
    for b in &outcome.manifest.blocks {
        println!(
            "  block {}: cameras {:>3}  G_blk {:>7}  G_vis {:>7}",
            b.block_id, b.camera_count, b.g_blk, b.g_vis
        );
    }
    println!("manifest written to {}", out.display());
    Ok(())
}

fn assign(scene_path: &Path, cams_path: &Path, manifest_path: &Path) -> Result<()> {
    let manifest = load_manifest(manifest_path)?;
    let (scene, cameras) = load_scene_and_cameras(scene_path, cams_path)?;
    let cfg = config_from_manifest(&manifest);
    let ctx = PartitionContext::build(&scene, &cameras, &cfg)?;
    let cuts = manifest.grid_cuts()?;
    let assignment = assign_cameras(&ctx.clouds, &cuts, manifest.delta, manifest.tau)?;

    let mut mismatches = 0;
    for b in &manifest.blocks {
        let fresh = &assignment[b.block_id - 1];
        if fresh == &b.camera_ids {
            println!("block {}: OK ({} cameras)", b.block_id, fresh.len());
        } else {
            mismatches += 1;
            println!(
                "block {}: MISMATCH (manifest {:?} vs recomputed {:?})",
                b.block_id, b.camera_ids, fresh
            );
        }
    }
    if mismatches > 0 {
        bail!("{mismatches} block(s) disagree with the manifest");
    }
    println!("all {} blocks verified", manifest.blocks.len());
    Ok(())
}

fn config_from_manifest(manifest: &PartitionManifest) -> PartitionConfig {
    PartitionConfig {
        m: manifest.grid.m,
        n: manifest.grid.n,
        iters: manifest.provenance.iterations.max(1) as usize,
        tau: manifest.tau,
        delta_scale: manifest.delta[0] * manifest.grid.m as f64,
        seed: manifest.provenance.seed,
        depth_downscale: manifest.provenance.depth_downscale,
        backproject_stride: manifest.provenance.backproject_stride,
        weight_floor: manifest.provenance.weight_floor,
    }
}

fn crop(
    scene_path: &Path,
    cams_path: &Path,
    manifest_path: &Path,
    block: usize,
    out: &Path,
) -> Result<()> {
    let manifest = load_manifest(manifest_path)?;
    let (scene, cameras) = load_scene_and_cameras(scene_path, cams_path)?;
    let cuts = manifest.grid_cuts()?;
    if block == 0 || block > manifest.blocks.len() {
        bail!(
            "block {block} outside 1..={} for this manifest",
            manifest.blocks.len()
        );
    }
    let matrix = lobe_core::visibility::visibility_matrix(&scene, &cameras)?;
    let i = (block - 1) / manifest.grid.n + 1;
    let j = (block - 1) % manifest.grid.n + 1;
    let cell = block_region(&cuts, i, j, [0.0, 0.0])?;
    let record = &manifest.blocks[block - 1];
    let sub = visibility_crop(&scene, &matrix, &record.camera_ids, &cell)?;
    save_block_subscene(&sub, out)?;
    println!(
        "block {}: {} visible gaussians ({} strictly in-block) -> {}",
        block,
        sub.len(),
        sub.in_block.iter().filter(|&&b| b).count(),
        out.display()
    );
    Ok(())
}

fn densify_sim(
    block: &Path,
    steps: usize,
    seed: u64,
    out: &Path,
    tau_grad: f64,
    scale_split: Option<f64>,
) -> Result<()> {
    let mut sub = load_block_subscene(block)?;
    let scale_split = scale_split.unwrap_or(0.02 * sub.frame.radius);
    let params = DensifyParams::new(tau_grad, scale_split);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let before = sub.len();
    for step in 0..steps {
        let grads: Vec<f64> = (0..sub.len()).map(|_| rng.random_range(0.0..1.0)).collect();
        let (next, stats) = simulate_densify_step(&sub, &grads, &params, &mut rng)?;
        println!(
            "step {}: {} clones, {} splits, {} gaussians",
            step + 1,
            stats.clones,
            stats.splits,
            next.len()
        );
        sub = next;
    }
    save_block_subscene(&sub, out)?;
    println!(
        "densified block {}: {} -> {} gaussians, written to {}",
        sub.block_id,
        before,
        sub.len(),
        out.display()
    );
    Ok(())
}

fn merge(manifest_path: &Path, blocks_dir: &Path, out: &Path) -> Result<()> {
    let manifest = load_manifest(manifest_path)?;
    let mut subs = Vec::new();
    for entry in std::fs::read_dir(blocks_dir)
        .with_context(|| format!("reading {}", blocks_dir.display()))?
    {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "ply") {
            subs.push(load_block_subscene(&path)?);
        }
    }
    let expected = manifest.grid.m * manifest.grid.n;
    let mut ids: Vec<usize> = subs.iter().map(|s| s.block_id).collect();
    ids.sort_unstable();
    let wanted: Vec<usize> = (1..=expected).collect();
    if ids != wanted {
        bail!(
            "blocks dir holds blocks {:?}, manifest expects exactly 1..={}",
            ids,
            expected
        );
    }
    let pruned: Vec<_> = subs.iter().map(prune_outside).collect();
    let merged = merge_blocks(&pruned)?;
    save_splat_ply(&merged, out)?;
    println!(
        "merged {} blocks into {} gaussians -> {}",
        pruned.len(),
        merged.len(),
        out.display()
    );
    Ok(())
}

fn manifest_block_stats(manifest: &PartitionManifest) -> Vec<BlockLoadStats> {
    manifest
        .blocks
        .iter()
        .map(|b| BlockLoadStats {
            block_id: b.block_id,
            area: b.area,
            camera_count: b.camera_count,
            g_blk: b.g_blk,
            g_vis: b.g_vis,
            g_avgvis: b.g_avgvis,
        })
        .collect()
}

/// Default proxy when no fitted model is supplied: 1e-4 minutes per visible
/// Gaussian plus half a minute of per-block overhead.
fn default_runtime_model() -> RuntimeModel {
    RuntimeModel {
        slope: 1e-4,
        intercept: 0.5,
        fit_r: 0.0,
    }
}

fn load_runtime_model(path: &Path) -> Result<RuntimeModel> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).context("parsing runtime model json")
}

#[allow(clippy::too_many_arguments)]
fn report(
    manifest_path: &Path,
    runtime_model: &str,
    format: &str,
    out: &Path,
    noise: f64,
    seed: u64,
    t_coarse: f64,
    t_partition: f64,
) -> Result<()> {
    let manifest = load_manifest(manifest_path)?;
    let blocks = manifest_block_stats(&manifest);
    let model = if runtime_model == "fit" {
        // simulate per-block fine timings around a linear ground truth and
        // recover the proxy from them
        let base = default_runtime_model();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g: Vec<f64> = blocks.iter().map(|b| b.g_vis as f64).collect();
        let t: Vec<f64> = blocks
            .iter()
            .map(|b| {
                let load = base.slope * b.g_vis as f64;
                load * (1.0 + noise * (2.0 * rng.random::<f64>() - 1.0)) + base.intercept
            })
            .collect();
        let model = fit_runtime_model(&g, &t)
            .context("fitting the runtime proxy (needs >= 2 blocks with varying G_vis)")?;
        let r = pearson_r(&g, &t)?;
        println!(
            "fitted runtime proxy: slope {:.3e} min/gaussian, intercept {:.3} min, r = {:.4}",
            model.slope, model.intercept, r
        );
        model
    } else {
        load_runtime_model(Path::new(runtime_model))?
    };
    let report = E2EReport::new(t_coarse, t_partition, blocks, &model)?;
    let fmt: ReportFormat = format.parse()?;
    emit_report(&report, out, fmt)?;
    println!(
        "T_coarse {} + T_partition {} + max T_fine {} = T_E2E {}",
        lobe_core::report::format_hhmm(report.t_coarse),
        lobe_core::report::format_hhmm(report.t_partition),
        lobe_core::report::format_hhmm(
            report.t_fine.iter().cloned().fold(0.0f64, f64::max)
        ),
        lobe_core::report::format_hhmm(report.t_e2e)
    );
    println!("report written to {}", out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn compare(
    scene_path: &Path,
    cams_path: &Path,
    grid: &str,
    strategies: &str,
    out: &Path,
    iters: usize,
    tau: f64,
    delta_scale: f64,
    seed: u64,
    runtime_model: Option<&Path>,
) -> Result<()> {
    let (m, n) = parse_grid(grid)?;
    let (scene, cameras) = load_scene_and_cameras(scene_path, cams_path)?;
    let strategies: Vec<Strategy> = strategies
        .split(',')
        .map(|s| s.trim().parse())
        .collect::<lobe_core::Result<_>>()?;
    let model = match runtime_model {
        Some(p) => load_runtime_model(p)?,
        None => default_runtime_model(),
    };
    let cfg = PartitionConfig {
        m,
        n,
        iters,
        tau,
        delta_scale,
        seed,
        ..PartitionConfig::new(m, n)
    };
    let report = compare_partitions(&scene, &cameras, &cfg, &strategies, &model, 0.0, 0.0)?;
    std::fs::write(out, comparison_to_csv(&report))
        .with_context(|| format!("writing {}", out.display()))?;
    for e in &report.entries {
        println!(
            "{:>13}: max G_vis {:>8}  predicted max T_fine {:>7.2} min",
            e.strategy, e.max_g_vis, e.predicted_max_t_fine
        );
    }
    println!("winner: {}", report.winner);
    println!("comparison written to {}", out.display());
    Ok(())
}
