//! Gaussian-process surrogate over cut positions: Matern-5/2 kernel with
//! per-dimension length-scales, fit by maximizing the marginal likelihood
//! with a multi-start coordinate search.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::partition::bounds::CutBounds;

const JITTER_FLOOR: f64 = 1e-6;
const JITTER_CEIL: f64 = 1e-2;
const LENGTH_SCALE_RANGE: (f64, f64) = (0.03, 10.0);
const SIGNAL_VAR_RANGE: (f64, f64) = (0.05, 20.0);

/// Fitted surrogate. Inputs are normalized to \[0,1\]^d via the cut bounds,
/// targets standardized to zero mean / unit variance.
#[derive(Debug, Clone)]
pub struct GpSurrogate {
    bounds: CutBounds,
    x_norm: Vec<Vec<f64>>,
    alpha: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    /// Per-dimension length-scales in normalized input space.
    pub length_scales: Vec<f64>,
    pub signal_var: f64,
    /// Noise jitter actually used (escalated from the floor if needed).
    pub noise: f64,
    y_mean: f64,
    y_std: f64,
}

fn matern52(r: f64) -> f64 {
    let s = 5.0f64.sqrt() * r;
    (1.0 + s + s * s / 3.0) * (-s).exp()
}

fn scaled_dist(a: &[f64], b: &[f64], ls: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(ls)
        .map(|((&x, &y), &l)| {
            let d = (x - y) / l;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

fn kernel_matrix(x: &[Vec<f64>], ls: &[f64], sv: f64, noise: f64) -> DMatrix<f64> {
    let n = x.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = sv * matern52(scaled_dist(&x[i], &x[j], ls));
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
        k[(i, i)] += noise;
    }
    k
}

/// Cholesky with jitter escalation: x10 per retry from the floor up to the
/// ceiling, then a conditioning error.
fn chol_with_jitter(
    x: &[Vec<f64>],
    ls: &[f64],
    sv: f64,
) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let mut jitter = JITTER_FLOOR;
    loop {
        let k = kernel_matrix(x, ls, sv, jitter);
        if let Some(chol) = Cholesky::new(k) {
            return Ok((chol, jitter));
        }
        jitter *= 10.0;
        if jitter > JITTER_CEIL {
            return Err(Error::IllConditioned { jitter });
        }
    }
}

/// Negative log marginal likelihood (up to the constant term).
fn nll(x: &[Vec<f64>], y: &DVector<f64>, ls: &[f64], sv: f64) -> Option<f64> {
    let (chol, _) = chol_with_jitter(x, ls, sv).ok()?;
    let alpha = chol.solve(y);
    let data_term = 0.5 * y.dot(&alpha);
    let log_det: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
    Some(data_term + log_det)
}

/// Fits the surrogate on raw cut vectors and raw objective values.
pub fn gp_fit(bounds: &CutBounds, xs: &[Vec<f64>], ys: &[f64]) -> Result<GpSurrogate> {
    if xs.len() < 2 || xs.len() != ys.len() {
        return Err(Error::InvalidInput(format!(
            "surrogate needs >= 2 observations, got {} xs / {} ys",
            xs.len(),
            ys.len()
        )));
    }
    let d = bounds.dim().max(1);
    let x_norm: Vec<Vec<f64>> = xs.iter().map(|x| bounds.normalize(x)).collect();

    let y_mean = ys.iter().sum::<f64>() / ys.len() as f64;
    let var = ys.iter().map(|y| (y - y_mean).powi(2)).sum::<f64>() / ys.len() as f64;
    let y_std = if var.sqrt() < 1e-12 { 1.0 } else { var.sqrt() };
    let y = DVector::from_iterator(ys.len(), ys.iter().map(|v| (v - y_mean) / y_std));

    // multi-start coordinate search on log hyperparameters
    let mut best: Option<(f64, Vec<f64>, f64)> = None; // (nll, ls, sv)
    for start_ls in [0.2, 0.5, 1.5] {
        let mut ls = vec![start_ls; d];
        let mut sv = 1.0;
        let mut cur = match nll(&x_norm, &y, &ls, sv) {
            Some(v) => v,
            None => continue,
        };
        for sweep in 0..2 {
            let step: f64 = if sweep == 0 { 0.6 } else { 0.3 };
            for dim in 0..d {
                for mult in [(-step).exp(), step.exp()] {
                    let cand = (ls[dim] * mult).clamp(LENGTH_SCALE_RANGE.0, LENGTH_SCALE_RANGE.1);
                    let mut trial = ls.clone();
                    trial[dim] = cand;
                    if let Some(v) = nll(&x_norm, &y, &trial, sv) {
                        if v < cur {
                            cur = v;
                            ls = trial;
                        }
                    }
                }
            }
            for mult in [(-step).exp(), step.exp()] {
                let cand = (sv * mult).clamp(SIGNAL_VAR_RANGE.0, SIGNAL_VAR_RANGE.1);
                if let Some(v) = nll(&x_norm, &y, &ls, cand) {
                    if v < cur {
                        cur = v;
                        sv = cand;
                    }
                }
            }
        }
        if best.as_ref().is_none_or(|(b, _, _)| cur < *b) {
            best = Some((cur, ls, sv));
        }
    }
    let (_, length_scales, signal_var) =
        best.ok_or(Error::IllConditioned { jitter: JITTER_CEIL })?;

    let (chol, noise) = chol_with_jitter(&x_norm, &length_scales, signal_var)?;
    let alpha = chol.solve(&y);
    Ok(GpSurrogate {
        bounds: bounds.clone(),
        x_norm,
        alpha,
        chol,
        length_scales,
        signal_var,
        noise,
        y_mean,
        y_std,
    })
}

impl GpSurrogate {
    /// Posterior mean and variance in standardized-target units.
    pub fn posterior_standardized(&self, x: &[f64]) -> (f64, f64) {
        let xq = self.bounds.normalize(x);
        let kstar = DVector::from_iterator(
            self.x_norm.len(),
            self.x_norm
                .iter()
                .map(|xi| self.signal_var * matern52(scaled_dist(&xq, xi, &self.length_scales))),
        );
        let mean = kstar.dot(&self.alpha);
        let v = self.chol.solve(&kstar);
        let var = (self.signal_var - kstar.dot(&v)).max(0.0);
        (mean, var)
    }

    /// Posterior mean and variance in original-target units.
    pub fn posterior(&self, x: &[f64]) -> (f64, f64) {
        let (m, v) = self.posterior_standardized(x);
        (m * self.y_std + self.y_mean, v * self.y_std * self.y_std)
    }

    pub fn train_len(&self) -> usize {
        self.x_norm.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn bounds_1d() -> CutBounds {
        CutBounds::uniform(2, 1).unwrap() // one cut in [0.25, 0.75]
    }

    #[test]
    fn needs_two_points() {
        let b = bounds_1d();
        assert!(gp_fit(&b, &[vec![0.5]], &[1.0]).is_err());
    }

    #[test]
    fn hopeless_kernel_reports_conditioning() {
        let b = bounds_1d();
        let xs = vec![vec![f64::NAN], vec![0.5]];
        assert!(matches!(
            gp_fit(&b, &xs, &[1.0, 2.0]),
            Err(crate::error::Error::IllConditioned { .. })
        ));
    }

    #[test]
    fn duplicate_points_identical_targets_interpolate() {
        let b = bounds_1d();
        let gp = gp_fit(&b, &[vec![0.5], vec![0.5]], &[3.0, 3.0]).unwrap();
        let (mean, _) = gp.posterior(&[0.5]);
        assert_relative_eq!(mean, 3.0, epsilon = 1e-9);
    }

    #[test]
    fn constant_targets_recovered_everywhere() {
        let b = bounds_1d();
        let xs = vec![vec![0.3], vec![0.5], vec![0.7]];
        let gp = gp_fit(&b, &xs, &[5.5, 5.5, 5.5]).unwrap();
        for x in [0.25, 0.4, 0.6, 0.75] {
            let (mean, _) = gp.posterior(&[x]);
            assert_relative_eq!(mean, 5.5, epsilon = 1e-9);
        }
    }

    #[test]
    fn five_point_fixture_interpolates() {
        let b = bounds_1d();
        let xs: Vec<Vec<f64>> = [0.3, 0.4, 0.5, 0.6, 0.7].iter().map(|&x| vec![x]).collect();
        let ys = [1.0, 3.0, 2.0, 5.0, 4.0];
        let gp = gp_fit(&b, &xs, &ys).unwrap();
        for (x, &y) in xs.iter().zip(&ys) {
            let (mean, _) = gp.posterior_standardized(x);
            let target = (y - gp.y_mean) / gp.y_std;
            assert!(
                (mean - target).abs() < 1e-4,
                "mean {mean} vs target {target} at {x:?}"
            );
        }
    }

    #[test]
    fn posterior_variance_nonnegative_and_small_at_training() {
        let b = bounds_1d();
        let xs: Vec<Vec<f64>> = [0.3, 0.45, 0.6, 0.75].iter().map(|&x| vec![x]).collect();
        let ys = [2.0, -1.0, 4.0, 0.5];
        let gp = gp_fit(&b, &xs, &ys).unwrap();
        for x in &xs {
            let (_, var) = gp.posterior_standardized(x);
            assert!(var >= 0.0);
            assert!(var <= gp.noise + 1e-6, "var {var} > noise {}", gp.noise);
        }
        // away from data the variance grows
        let (_, var_far) = gp.posterior_standardized(&[0.26]);
        assert!(var_far > gp.noise);
    }
}
