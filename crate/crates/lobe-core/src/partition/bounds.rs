//! Box constraints for the cut optimizer: each cut may move at most halfway
//! toward its neighbors of the initial uniform partition, which preserves
//! ordering by construction.

use crate::error::{Error, Result};
use crate::scene::GridCuts;

/// Per-cut closed intervals for the (m-1) + (n-1) decision variables, laid out
/// as [v_1 .. v_{m-1}, h_1 .. h_{n-1}].
#[derive(Debug, Clone, PartialEq)]
pub struct CutBounds {
    m: usize,
    n: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl CutBounds {
    /// Bounds around the uniform cuts: v_i in [ (v0_{i-1}+v0_i)/2, (v0_i+v0_{i+1})/2 ]
    /// with v0_i = i/m, v0_0 = 0, v0_m = 1 (and the same for h with n).
    pub fn uniform(m: usize, n: usize) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(Error::InvalidInput(format!("grid must be >= 1x1, got {m}x{n}")));
        }
        let mut lo = Vec::with_capacity(m + n - 2);
        let mut hi = Vec::with_capacity(m + n - 2);
        let push_axis = |count: usize, lo: &mut Vec<f64>, hi: &mut Vec<f64>| {
            for i in 1..count {
                let prev = (i - 1) as f64 / count as f64;
                let cur = i as f64 / count as f64;
                let next = (i + 1) as f64 / count as f64;
                lo.push(0.5 * (prev + cur));
                hi.push(0.5 * (cur + next));
            }
        };
        push_axis(m, &mut lo, &mut hi);
        push_axis(n, &mut lo, &mut hi);
        Ok(Self { m, n, lo, hi })
    }

    /// Explicit bounds; intervals must be nonempty (lo <= hi) and as many as
    /// the grid has cuts.
    pub fn new(m: usize, n: usize, lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if m == 0 || n == 0 || lo.len() != m + n - 2 || hi.len() != lo.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} bounds for a {m}x{n} grid",
                m.saturating_add(n).saturating_sub(2)
            )));
        }
        if lo.iter().zip(&hi).any(|(l, h)| l > h) {
            return Err(Error::InvalidInput("empty bound interval".into()));
        }
        Ok(Self { m, n, lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.m, self.n)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(&v, (&l, &h))| v >= l && v <= h)
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for ((v, &l), &h) in x.iter_mut().zip(&self.lo).zip(&self.hi) {
            *v = v.clamp(l, h);
        }
    }

    /// Maps a point of the box to \[0,1\]^d (degenerate axes go to 0.5).
    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(&v, (&l, &h))| {
                let den = h - l;
                if den <= 0.0 {
                    0.5
                } else {
                    ((v - l) / den).clamp(0.0, 1.0)
                }
            })
            .collect()
    }

    /// Turns a decision vector into validated cuts. Adjacent cuts can collide
    /// exactly at a shared interval endpoint; those ties get an infinitesimal
    /// bump so strict monotonicity holds.
    pub fn to_cuts(&self, x: &[f64]) -> Result<GridCuts> {
        if x.len() != self.dim() {
            return Err(Error::InvalidCuts(format!(
                "expected {} decision variables, got {}",
                self.dim(),
                x.len()
            )));
        }
        let mut v = x[..self.m - 1].to_vec();
        let mut h = x[self.m - 1..].to_vec();
        for cuts in [&mut v, &mut h] {
            for k in 1..cuts.len() {
                if cuts[k] <= cuts[k - 1] {
                    cuts[k] = cuts[k - 1] + 1e-12;
                }
            }
        }
        GridCuts::new(self.m, self.n, v, h)
    }
}
