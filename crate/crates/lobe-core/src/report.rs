//! Load statistics, Pearson correlation, the end-to-end runtime model, and
//! report emission.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::{
    init_uniform_cuts, objective, ObjectiveEval, PartitionConfig, PartitionContext,
};
use crate::scene::{CameraView, GaussianScene, GridCuts};
use crate::visibility::BlockLoadStats;

/// Sample Pearson correlation coefficient, clamped into [-1, 1].
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "pearson_r needs two equal-length series of >= 2 samples, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation(
            "zero variance in at least one series".into(),
        ));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Affine proxy from visible-Gaussian count to fine-stage minutes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeModel {
    /// Minutes per visible Gaussian; never negative.
    pub slope: f64,
    /// Minutes.
    pub intercept: f64,
    /// Pearson correlation of the fit.
    pub fit_r: f64,
}

impl RuntimeModel {
    pub fn predict_minutes(&self, g_vis: u64) -> f64 {
        (self.slope * g_vis as f64 + self.intercept).max(0.0)
    }
}

/// Ordinary least squares of t_fine against g_vis; a negative slope is
/// clamped to zero with a warning since more load cannot predict less time.
pub fn fit_runtime_model(g_vis: &[f64], t_fine: &[f64]) -> Result<RuntimeModel> {
    let fit_r = pearson_r(g_vis, t_fine)?;
    let n = g_vis.len() as f64;
    let mx = g_vis.iter().sum::<f64>() / n;
    let my = t_fine.iter().sum::<f64>() / n;
    let sxx: f64 = g_vis.iter().map(|&v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = g_vis.iter().zip(t_fine).map(|(&a, &b)| (a - mx) * (b - my)).sum();
    let mut slope = sxy / sxx;
    let mut intercept = my - slope * mx;
    if slope < 0.0 {
        log::warn!("runtime model fit produced negative slope {slope}; clamping to 0");
        slope = 0.0;
        intercept = my;
    }
    Ok(RuntimeModel {
        slope,
        intercept,
        fit_r,
    })
}

/// Constant-time variant used when per-block timings are all equal.
pub fn constant_runtime_model(minutes: f64) -> RuntimeModel {
    RuntimeModel {
        slope: 0.0,
        intercept: minutes,
        fit_r: 0.0,
    }
}

/// End-to-end minutes: coarse + partition + the slowest block.
pub fn e2e_runtime(t_coarse: f64, t_partition: f64, t_fine: &[f64]) -> Result<f64> {
    if t_fine.is_empty() {
        return Err(Error::InvalidInput("no per-block fine times".into()));
    }
    if t_coarse < 0.0 || t_partition < 0.0 || t_fine.iter().any(|&t| t.is_nan() || t < 0.0) {
        return Err(Error::InvalidInput("negative or non-finite stage time".into()));
    }
    let max_fine = t_fine.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(t_coarse + t_partition + max_fine)
}

/// hh:mm rendering of a duration in minutes, via integer seconds.
pub fn format_hhmm(minutes: f64) -> String {
    let total_secs = (minutes * 60.0).round() as i64;
    let h = total_secs / 3600;
    let m = (total_secs % 3600) / 60;
    format!("{h:02}:{m:02}")
}

/// Full end-to-end runtime report: stage times plus per-block stats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct E2EReport {
    pub t_coarse: f64,
    pub t_partition: f64,
    /// Predicted fine minutes per block, in block order.
    pub t_fine: Vec<f64>,
    pub t_e2e: f64,
    pub blocks: Vec<BlockLoadStats>,
}

impl E2EReport {
    pub fn new(
        t_coarse: f64,
        t_partition: f64,
        blocks: Vec<BlockLoadStats>,
        model: &RuntimeModel,
    ) -> Result<Self> {
        let t_fine: Vec<f64> = blocks.iter().map(|b| model.predict_minutes(b.g_vis)).collect();
        let t_e2e = e2e_runtime(t_coarse, t_partition, &t_fine)?;
        Ok(Self {
            t_coarse,
            t_partition,
            t_fine,
            t_e2e,
            blocks,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::InvalidInput(format!("unknown format `{other}`"))),
        }
    }
}

pub fn report_to_csv(report: &E2EReport) -> String {
    let mut out = String::from("block_id,area,camera_count,g_blk,g_vis,g_avgvis,t_fine_pred\n");
    for (b, t) in report.blocks.iter().zip(&report.t_fine) {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            b.block_id, b.area, b.camera_count, b.g_blk, b.g_vis, b.g_avgvis, t
        ));
    }
    out
}

/// Writes the report as JSON (mirror of [`E2EReport`]) or CSV.
pub fn emit_report(report: &E2EReport, path: impl AsRef<Path>, format: ReportFormat) -> Result<()> {
    let path = path.as_ref();
    let bytes = match format {
        ReportFormat::Json => {
            let mut b = serde_json::to_vec_pretty(report)?;
            b.push(b'\n');
            b
        }
        ReportFormat::Csv => report_to_csv(report).into_bytes(),
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// A partitioning strategy to compare.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Uniform cuts at i/m, j/n.
    Uniform,
    /// Cuts at per-axis quantiles of the camera positions, equalizing camera
    /// counts per row/column slab.
    EqualCamera,
    /// Cuts from the surrogate-guided optimizer.
    Optimized,
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Uniform => "uniform",
            Strategy::EqualCamera => "equal-camera",
            Strategy::Optimized => "optimized",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Strategy::Uniform),
            "equal-camera" => Ok(Strategy::EqualCamera),
            "optimized" => Ok(Strategy::Optimized),
            other => Err(Error::InvalidInput(format!("unknown strategy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StrategyReport {
    pub strategy: String,
    pub cuts_v: Vec<f64>,
    pub cuts_h: Vec<f64>,
    pub max_g_vis: u64,
    pub predicted_max_t_fine: f64,
    pub predicted_t_e2e: f64,
    pub blocks: Vec<BlockLoadStats>,
    pub t_fine: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub entries: Vec<StrategyReport>,
    pub winner: String,
}

/// Per-axis camera-count-equalizing cuts: quantiles of the cameras' grid
/// coordinates, nudged into strict monotonicity.
pub fn equal_camera_cuts(
    scene: &GaussianScene,
    cameras: &[CameraView],
    m: usize,
    n: usize,
) -> Result<GridCuts> {
    if cameras.is_empty() {
        return Err(Error::InvalidInput("no cameras".into()));
    }
    let coords: Vec<[f64; 2]> = cameras
        .iter()
        .map(|c| scene.frame().grid_coords(&c.position()))
        .collect();
    let cuts_along = |axis: usize, parts: usize| -> Vec<f64> {
        let mut vals: Vec<f64> = coords.iter().map(|c| c[axis]).collect();
        vals.sort_by(f64::total_cmp);
        let mut cuts = Vec::with_capacity(parts - 1);
        for k in 1..parts {
            let q = k as f64 / parts as f64;
            let pos = q * (vals.len() - 1) as f64;
            let i = pos.floor() as usize;
            let frac = pos - i as f64;
            let v = if i + 1 < vals.len() {
                vals[i] * (1.0 - frac) + vals[i + 1] * frac
            } else {
                vals[i]
            };
            cuts.push(v.clamp(1e-6, 1.0 - 1e-6));
        }
        for k in 1..cuts.len() {
            if cuts[k] <= cuts[k - 1] {
                cuts[k] = (cuts[k - 1] + 1e-9).min(1.0 - 1e-9);
            }
        }
        cuts
    };
    GridCuts::new(m, n, cuts_along(0, m), cuts_along(1, n))
}

/// Evaluates the requested strategies on a shared context (one render per
/// camera total) and predicts per-block fine times with `model`. The winner
/// is the first strategy, in the given order, with the smallest predicted
/// max t_fine; list `optimized` last so ties go to simpler strategies.
#[allow(clippy::too_many_arguments)]
pub fn compare_partitions(
    scene: &GaussianScene,
    cameras: &[CameraView],
    cfg: &PartitionConfig,
    strategies: &[Strategy],
    model: &RuntimeModel,
    t_coarse: f64,
    t_partition: f64,
) -> Result<ComparisonReport> {
    if strategies.is_empty() {
        return Err(Error::InvalidInput("no strategies requested".into()));
    }
    let ctx = PartitionContext::build(scene, cameras, cfg)?;
    let delta = cfg.delta();
    let mut entries = Vec::new();
    for strat in strategies {
        let cuts: GridCuts = match strat {
            Strategy::Uniform => init_uniform_cuts(cfg.m, cfg.n)?,
            Strategy::EqualCamera => equal_camera_cuts(scene, cameras, cfg.m, cfg.n)?,
            Strategy::Optimized => {
                // the optimizer builds its own context (one extra render pass)
                crate::partition::optimize_partition(scene, cameras, cfg)?.cuts
            }
        };
        let eval: ObjectiveEval = objective(scene, &ctx, &cuts, delta, cfg.tau)?;
        let t_fine: Vec<f64> = eval
            .stats
            .iter()
            .map(|b| model.predict_minutes(b.g_vis))
            .collect();
        let predicted_max = t_fine.iter().cloned().fold(0.0f64, f64::max);
        entries.push(StrategyReport {
            strategy: strat.name().to_string(),
            cuts_v: cuts.v().to_vec(),
            cuts_h: cuts.h().to_vec(),
            max_g_vis: eval.max_g_vis,
            predicted_max_t_fine: predicted_max,
            predicted_t_e2e: e2e_runtime(t_coarse, t_partition, &t_fine)?,
            blocks: eval.stats,
            t_fine,
        });
    }
    let mut winner = 0;
    for (i, e) in entries.iter().enumerate() {
        if e.predicted_max_t_fine < entries[winner].predicted_max_t_fine {
            winner = i;
        }
    }
    Ok(ComparisonReport {
        winner: entries[winner].strategy.clone(),
        entries,
    })
}

pub fn comparison_to_csv(report: &ComparisonReport) -> String {
    let mut out = String::from(
        "strategy,block_id,area,camera_count,g_blk,g_vis,g_avgvis,t_fine_pred,strategy_max_g_vis,strategy_predicted_t_e2e\n",
    );
    for e in &report.entries {
        for (b, t) in e.blocks.iter().zip(&e.t_fine) {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                e.strategy,
                b.block_id,
                b.area,
                b.camera_count,
                b.g_blk,
                b.g_vis,
                b.g_avgvis,
                t,
                e.max_g_vis,
                e.predicted_t_e2e
            ));
        }
    }
    out
}
