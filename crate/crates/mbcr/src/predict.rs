//! Posterior-mean prediction, pointwise credible bands, and a randomized
//! convexity certificate for the fitted estimator.

use rand::Rng;

use crate::core::ModelState;
use crate::error::{Error, Result};
use crate::sampler::PosteriorSamples;

/// Pointwise posterior mean: the average of `evaluate(draw, x)` over all
/// retained draws. An average of maxima of affine functions, hence convex
/// in `x`.
pub fn posterior_mean(samples: &PosteriorSamples, x: &[f64]) -> Result<f64> {
    check_dim(samples, x)?;
    let sum: f64 = samples.draws().iter().map(|s| s.evaluate(x)).sum();
    Ok(sum / samples.len() as f64)
}

/// Pointwise credible band: empirical quantiles of the per-draw evaluations
/// at `(1 − level)/2` and `1 − (1 − level)/2`, using the nearest-rank rule
/// `sorted[⌈q·M⌉ − 1]`. Requires at least 10 draws and `level ∈ (0, 1)`.
pub fn posterior_band(samples: &PosteriorSamples, x: &[f64], level: f64) -> Result<(f64, f64)> {
    check_dim(samples, x)?;
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidInput(format!(
            "credible level must lie strictly in (0, 1), got {level}"
        )));
    }
    let m = samples.len();
    if m < 10 {
        return Err(Error::InvalidInput(format!(
            "credible bands need at least 10 draws, got {m}"
        )));
    }
    let mut values: Vec<f64> = samples.draws().iter().map(|s| s.evaluate(x)).collect();
    values.sort_by(|a, b| a.total_cmp(b));
    let tail = (1.0 - level) / 2.0;
    let lo = values[nearest_rank(tail, m)];
    let hi = values[nearest_rank(1.0 - tail, m)];
    Ok((lo, hi))
}

/// 0-based index of the nearest-rank (type-1) quantile in a sorted sample
/// of size `m`.
fn nearest_rank(q: f64, m: usize) -> usize {
    let rank = (q * m as f64).ceil() as usize;
    rank.clamp(1, m) - 1
}

/// Outcome of a randomized midpoint-convexity check on the posterior mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvexityReport {
    pub probes: usize,
    /// Largest observed `f(tx₁ + (1−t)x₂) − [t·f(x₁) + (1−t)·f(x₂)]`;
    /// non-positive up to rounding for a genuinely convex estimator.
    pub max_violation: f64,
}

impl ConvexityReport {
    pub fn holds(&self, tolerance: f64) -> bool {
        self.max_violation <= tolerance
    }
}

/// Probes the posterior mean with random triples `(x₁, x₂, t)` inside the
/// given box and records the worst convex-combination violation. Values
/// beyond ~1e−9 indicate an implementation bug, since the estimator is
/// convex by construction.
pub fn convexity_certificate<R: Rng + ?Sized>(
    samples: &PosteriorSamples,
    lower: &[f64],
    upper: &[f64],
    probe_count: usize,
    rng: &mut R,
) -> Result<ConvexityReport> {
    let p = samples.dim();
    if lower.len() != p || upper.len() != p {
        return Err(Error::DimensionMismatch { expected: p, got: lower.len() });
    }
    if probe_count == 0 {
        return Err(Error::InvalidInput("probe_count must be at least 1".into()));
    }
    if lower.iter().zip(upper).any(|(l, u)| !(l <= u) || !l.is_finite() || !u.is_finite()) {
        return Err(Error::InvalidInput("probe box must satisfy lower ≤ upper, finite".into()));
    }
    let mut max_violation = f64::NEG_INFINITY;
    let mut x1 = vec![0.0; p];
    let mut x2 = vec![0.0; p];
    let mut xm = vec![0.0; p];
    for _ in 0..probe_count {
        for j in 0..p {
            x1[j] = rng.random_range(lower[j]..=upper[j]);
            x2[j] = rng.random_range(lower[j]..=upper[j]);
        }
        let t: f64 = rng.random();
        for j in 0..p {
            xm[j] = t * x1[j] + (1.0 - t) * x2[j];
        }
        let f1 = posterior_mean(samples, &x1)?;
        let f2 = posterior_mean(samples, &x2)?;
        let fm = posterior_mean(samples, &xm)?;
        max_violation = max_violation.max(fm - (t * f1 + (1.0 - t) * f2));
    }
    Ok(ConvexityReport { probes: probe_count, max_violation })
}

fn check_dim(samples: &PosteriorSamples, x: &[f64]) -> Result<()> {
    if x.len() != samples.dim() {
        return Err(Error::DimensionMismatch { expected: samples.dim(), got: x.len() });
    }
    Ok(())
}

/// Evaluates one draw at `x` — re-exported shape used by the CLI's predict
/// path when a single state (e.g. an LSE fit) stands in for a sample set.
pub fn evaluate_state(state: &ModelState, x: &[f64]) -> f64 {
    state.evaluate(x)
}
