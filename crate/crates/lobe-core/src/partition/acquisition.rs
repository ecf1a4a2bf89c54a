//! Expected improvement and its maximizer: scrambled-Halton multi-start plus
//! pattern-search refinement.

use rand::Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::partition::bounds::CutBounds;
use crate::partition::gp::GpSurrogate;

const EI_SAMPLES: usize = 1024;
const PATTERN_STEPS: usize = 20;

/// EI for minimization: (best - mu) Phi(z) + sigma phi(z), z = (best - mu)/sigma.
/// Degenerates to max(best - mu, 0) as sigma -> 0.
pub fn expected_improvement(mu: f64, sigma: f64, best: f64) -> f64 {
    let gap = best - mu;
    if sigma < 1e-12 {
        return gap.max(0.0);
    }
    let z = gap / sigma;
    let std_normal = Normal::new(0.0, 1.0).unwrap();
    let pdf = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    (gap * std_normal.cdf(z) + sigma * pdf).max(0.0)
}

/// EI of the surrogate posterior at `x` against the incumbent `best_y`.
pub fn acquisition_ei(gp: &GpSurrogate, x: &[f64], best_y: f64) -> f64 {
    let (mu, var) = gp.posterior(x);
    expected_improvement(mu, var.max(0.0).sqrt(), best_y)
}

const PRIMES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

fn radical_inverse(mut idx: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut out = 0.0;
    let mut frac = inv;
    while idx > 0 {
        out += (idx % base) as f64 * frac;
        idx /= base;
        frac *= inv;
    }
    out
}

/// `index`-th point of a Halton sequence with a Cranley-Patterson rotation,
/// mapped into the bounds box.
pub fn halton_in_bounds(bounds: &CutBounds, index: u64, shift: &[f64]) -> Vec<f64> {
    (0..bounds.dim())
        .map(|d| {
            let base = PRIMES[d % PRIMES.len()];
            let u = (radical_inverse(index + 1, base) + shift[d]).fract();
            bounds.lo()[d] + u * (bounds.hi()[d] - bounds.lo()[d])
        })
        .collect()
}

/// Maximizes EI over scrambled-Halton samples, then refines with a clamped
/// pattern search. Deterministic given the RNG state.
pub fn propose_candidate(
    gp: &GpSurrogate,
    bounds: &CutBounds,
    best_y: f64,
    rng: &mut impl Rng,
) -> Vec<f64> {
    let d = bounds.dim();
    if d == 0 {
        return Vec::new();
    }
    let shift: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
    let mut best_x = halton_in_bounds(bounds, 0, &shift);
    let mut best_ei = acquisition_ei(gp, &best_x, best_y);
    for k in 1..EI_SAMPLES as u64 {
        let x = halton_in_bounds(bounds, k, &shift);
        let ei = acquisition_ei(gp, &x, best_y);
        if ei > best_ei {
            best_ei = ei;
            best_x = x;
        }
    }

    let mut step: Vec<f64> = bounds
        .lo()
        .iter()
        .zip(bounds.hi())
        .map(|(&l, &h)| 0.25 * (h - l))
        .collect();
    for _ in 0..PATTERN_STEPS {
        let mut improved = false;
        for dim in 0..d {
            for sign in [-1.0, 1.0] {
                let mut cand = best_x.clone();
                cand[dim] += sign * step[dim];
                bounds.clamp(&mut cand);
                let ei = acquisition_ei(gp, &cand, best_y);
                if ei > best_ei {
                    best_ei = ei;
                    best_x = cand;
                    improved = true;
                }
            }
        }
        if !improved {
            for s in step.iter_mut() {
                *s *= 0.5;
            }
        }
    }
    best_x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::gp::gp_fit;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ei_zero_at_incumbent_without_uncertainty() {
        assert_eq!(expected_improvement(5.0, 0.0, 5.0), 0.0);
        assert_eq!(expected_improvement(6.0, 0.0, 5.0), 0.0);
        assert_eq!(expected_improvement(4.0, 0.0, 5.0), 1.0);
    }

    #[test]
    fn ei_hand_value_at_z_one() {
        // mu = best - sigma: EI = sigma * (Phi(1) + phi(1)) ~= sigma * 1.08332
        for sigma in [0.5, 1.0, 2.0] {
            let ei = expected_improvement(5.0 - sigma, sigma, 5.0);
            assert_relative_eq!(ei, sigma * 1.0833154705876864, epsilon = 1e-6);
        }
    }

    #[test]
    fn ei_positive_under_uncertainty() {
        assert!(expected_improvement(5.0, 0.3, 5.0) > 0.0);
        // even above the incumbent, uncertainty keeps a little hope
        assert!(expected_improvement(5.5, 1.0, 5.0) > 0.0);
    }

    #[test]
    fn halton_stays_in_bounds_and_fills() {
        let b = CutBounds::uniform(3, 2).unwrap();
        let shift = vec![0.37; b.dim()];
        let mut mins = vec![f64::INFINITY; b.dim()];
        let mut maxs = vec![f64::NEG_INFINITY; b.dim()];
        for k in 0..256 {
            let x = halton_in_bounds(&b, k, &shift);
            assert!(b.contains(&x));
            for d in 0..b.dim() {
                mins[d] = mins[d].min(x[d]);
                maxs[d] = maxs[d].max(x[d]);
            }
        }
        for d in 0..b.dim() {
            let span = b.hi()[d] - b.lo()[d];
            assert!(maxs[d] - mins[d] > 0.8 * span, "dimension {d} poorly covered");
        }
    }

    #[test]
    fn proposal_on_point_collapsed_bounds_returns_the_point() {
        let b = CutBounds::new(2, 1, vec![0.4], vec![0.4]).unwrap();
        let gp = gp_fit(&b, &[vec![0.4], vec![0.4]], &[1.0, 1.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = propose_candidate(&gp, &b, 1.0, &mut rng);
        assert_eq!(x, vec![0.4]);
    }

    #[test]
    fn fresh_surrogate_explores_interior() {
        let b = CutBounds::uniform(2, 1).unwrap(); // [0.25, 0.75]
        let gp = gp_fit(&b, &[vec![0.25], vec![0.75]], &[4.0, 4.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = propose_candidate(&gp, &b, 4.0, &mut rng);
        assert!(x[0] > 0.26 && x[0] < 0.74, "expected interior, got {}", x[0]);
    }

    #[test]
    fn proposal_deterministic_for_fixed_seed() {
        let b = CutBounds::uniform(2, 2).unwrap();
        let gp = gp_fit(
            &b,
            &[vec![0.3, 0.3], vec![0.7, 0.7], vec![0.5, 0.4]],
            &[3.0, 1.0, 2.0],
        )
        .unwrap();
        let a = propose_candidate(&gp, &b, 1.0, &mut ChaCha8Rng::seed_from_u64(9));
        let c = propose_candidate(&gp, &b, 1.0, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, c);
    }
}
