//! Normal–inverse-gamma conjugacy for one hyperplane.
//!
//! The coefficient vector θ = (α, β) and noise variance σ² of a hyperplane
//! carry a conjugate prior
//!
//! ```text
//! σ²        ~ InverseGamma(a, b)          density ∝ σ^{−2(a+1)} e^{−b/σ²}
//! θ | σ²    ~ Normal(μ, σ² V)
//! ```
//!
//! Given the subset of observations attributed to the hyperplane, the
//! posterior is again NIG with
//!
//! ```text
//! V* = (V⁻¹ + XᵀX)⁻¹          μ* = V* (V⁻¹ μ + Xᵀ y)
//! a* = a + m/2                b* = b + ½ (μᵀV⁻¹μ + yᵀy − μ*ᵀ V*⁻¹ μ*)
//! ```
//!
//! where X stacks the design rows [1, xᵢ] of the subset. All solves go
//! through Cholesky factorizations — never an explicit inverse on the hot
//! path — with a small escalating ridge when a factorization fails.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use statrs::function::gamma::ln_gamma;

use crate::core::{Dataset, LN_2PI};
use crate::error::{Error, Result};

/// Attempts allowed when rejection-sampling into a truncation box before
/// giving up with a sampling error.
pub const TRUNCATION_ATTEMPT_CAP: usize = 10_000;

/// Monte-Carlo draws used to estimate a truncation normalizing constant.
pub const TRUNCATION_MC_DRAWS: usize = 100_000;

/// Hyperparameters (μ, V, a, b) of a normal–inverse-gamma distribution over
/// (θ, σ²), θ of dimension `p + 1`.
///
/// The lower Cholesky factor of V is computed once at construction and kept
/// alongside, so sampling and density evaluation never refactor.
#[derive(Debug, Clone)]
pub struct NigParams {
    mu: DVector<f64>,
    v: DMatrix<f64>,
    a: f64,
    b: f64,
    chol_l: DMatrix<f64>,
}

impl PartialEq for NigParams {
    fn eq(&self, other: &Self) -> bool {
        self.mu == other.mu && self.v == other.v && self.a == other.a && self.b == other.b
    }
}

impl NigParams {
    /// Validates and builds hyperparameters: V must be symmetric positive
    /// definite, `a > 0`, `b > 0`.
    pub fn new(mu: DVector<f64>, v: DMatrix<f64>, a: f64, b: f64) -> Result<Self> {
        if v.nrows() != v.ncols() || v.nrows() != mu.len() || mu.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: mu.len(),
                got: v.nrows(),
            });
        }
        if !(a.is_finite() && a > 0.0 && b.is_finite() && b > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "NIG shape/scale must be positive, got a = {a}, b = {b}"
            )));
        }
        if mu.iter().any(|m| !m.is_finite()) || v.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidConfig("NIG hyperparameters must be finite".into()));
        }
        let max_asym = (0..v.nrows())
            .flat_map(|i| (0..i).map(move |j| (i, j)))
            .map(|(i, j)| (v[(i, j)] - v[(j, i)]).abs())
            .fold(0.0f64, f64::max);
        if max_asym > 1e-8 * (1.0 + v.iter().fold(0.0f64, |m, x| m.max(x.abs()))) {
            return Err(Error::InvalidConfig("NIG covariance must be symmetric".into()));
        }
        let chol = Cholesky::new(v.clone())
            .ok_or_else(|| Error::InvalidConfig("NIG covariance must be positive definite".into()))?;
        Ok(Self {
            mu,
            v,
            a,
            b,
            chol_l: chol.unpack(),
        })
    }

    /// Construction path for computed posteriors: identical checks, but a
    /// failed factorization is a numerical error rather than a config error.
    fn from_update(mu: DVector<f64>, v: DMatrix<f64>, a: f64, b: f64) -> Result<Self> {
        let chol = cholesky_with_jitter(v.clone())
            .ok_or_else(|| Error::Numerical("posterior covariance lost positive definiteness".into()))?;
        Ok(Self {
            mu,
            v,
            a,
            b,
            chol_l: chol.unpack(),
        })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    /// Scales V (and its factor) by a positive constant in place.
    pub fn scale_v(&mut self, factor: f64) {
        assert!(factor > 0.0 && factor.is_finite());
        self.v *= factor;
        self.chol_l *= factor.sqrt();
    }

    /// `ln |V|` from the cached factor.
    fn log_det_v(&self) -> f64 {
        2.0 * (0..self.dim()).map(|i| self.chol_l[(i, i)].ln()).sum::<f64>()
    }

    /// Solves `L w = r` in place against the cached lower factor and returns
    /// `‖w‖² = rᵀ V⁻¹ r`.
    fn mahalanobis_sq(&self, r: &DVector<f64>) -> f64 {
        let mut w = r.clone();
        self.chol_l.solve_lower_triangular_mut(&mut w);
        w.norm_squared()
    }
}

/// Cholesky with an escalating ridge: on failure, adds
/// `10^{−10+2e} · trace/d · I` for escalation e = 0, 1, 2 before giving up.
/// Returns `None` when even the largest ridge fails (indefinite input).
pub(crate) fn cholesky_with_jitter(m: DMatrix<f64>) -> Option<Cholesky<f64, nalgebra::Dyn>> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Some(c);
    }
    let d = m.nrows();
    let base = 1e-10 * m.trace().abs().max(1e-300) / d as f64;
    for escalation in 0..3 {
        let ridge = base * 100f64.powi(escalation);
        let mut jittered = m.clone();
        for i in 0..d {
            jittered[(i, i)] += ridge;
        }
        if let Some(c) = Cholesky::new(jittered) {
            return Some(c);
        }
    }
    None
}

/// Conjugate update of `prior` against the observations listed in `rows`
/// (indices into `data`). An empty subset returns the prior verbatim.
pub fn nig_posterior(prior: &NigParams, data: &Dataset, rows: &[usize]) -> Result<NigParams> {
    let d = prior.dim();
    if d != data.dim() + 1 {
        return Err(Error::DimensionMismatch {
            expected: data.dim() + 1,
            got: d,
        });
    }
    if rows.is_empty() {
        return Ok(prior.clone());
    }

    // Precision form: M = V⁻¹ + Σ zᵢzᵢᵀ,  r = V⁻¹μ + Σ zᵢyᵢ,  z = [1, x].
    let chol_prior = Cholesky::new(prior.v.clone())
        .ok_or_else(|| Error::Numerical("prior covariance lost positive definiteness".into()))?;
    let v_inv = chol_prior.inverse();
    let v_inv_mu = &v_inv * &prior.mu;

    let mut m = v_inv;
    let mut r = v_inv_mu.clone();
    let mut yty = 0.0;
    let mut z = DVector::zeros(d);
    for &i in rows {
        z[0] = 1.0;
        for j in 0..data.dim() {
            z[j + 1] = data.x()[(i, j)];
        }
        let yi = data.y()[i];
        // Rank-one accumulation on the lower triangle, mirrored afterwards.
        for c in 0..d {
            for rr in c..d {
                m[(rr, c)] += z[rr] * z[c];
            }
        }
        r.axpy(yi, &z, 1.0);
        yty += yi * yi;
    }
    for c in 0..d {
        for rr in 0..c {
            m[(rr, c)] = m[(c, rr)];
        }
    }

    let chol_m = cholesky_with_jitter(m.clone())
        .ok_or_else(|| Error::Numerical("posterior precision is not positive definite".into()))?;
    let mu_star = chol_m.solve(&r);
    let mut v_star = chol_m.inverse();
    // Exact symmetry keeps downstream factorizations honest.
    for c in 0..d {
        for rr in 0..c {
            let s = 0.5 * (v_star[(rr, c)] + v_star[(c, rr)]);
            v_star[(rr, c)] = s;
            v_star[(c, rr)] = s;
        }
    }

    let a_star = prior.a + rows.len() as f64 / 2.0;
    // μ*ᵀ V*⁻¹ μ* = μ*ᵀ (M μ*) = μ*ᵀ r since M μ* = r.
    let b_star = prior.b + 0.5 * (prior.mu.dot(&v_inv_mu) + yty - mu_star.dot(&r));
    if !(b_star.is_finite() && b_star > 0.0) {
        return Err(Error::Numerical(format!(
            "posterior scale must stay positive, got {b_star}"
        )));
    }

    NigParams::from_update(mu_star, v_star, a_star, b_star)
}

/// Draws `(θ, σ²)` from the distribution, σ² first then θ | σ².
///
/// With `truncation = Some(v)`, rejection-samples until every coordinate of θ
/// lands in `[−v, v]`, failing after [`TRUNCATION_ATTEMPT_CAP`] attempts.
pub fn nig_sample<R: Rng + ?Sized>(
    params: &NigParams,
    truncation: Option<f64>,
    rng: &mut R,
) -> Result<(DVector<f64>, f64)> {
    let gamma = Gamma::new(params.a, 1.0)
        .map_err(|e| Error::Sampling(format!("invalid inverse-gamma shape: {e}")))?;
    let attempts = if truncation.is_some() { TRUNCATION_ATTEMPT_CAP } else { 1 };
    for _ in 0..attempts {
        // σ² = b / G with G ~ Gamma(a, 1) is InverseGamma(a, b).
        let g: f64 = gamma.sample(rng);
        let sigma2 = params.b / g;
        let sigma = sigma2.sqrt();
        let z = DVector::from_fn(params.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        let theta = &params.mu + (&params.chol_l * z) * sigma;
        match truncation {
            None => return Ok((theta, sigma2)),
            Some(bound) if theta.iter().all(|t| t.abs() <= bound) => return Ok((theta, sigma2)),
            Some(_) => continue,
        }
    }
    Err(Error::Sampling(format!(
        "truncation box rejected {TRUNCATION_ATTEMPT_CAP} consecutive draws"
    )))
}

/// Log density of `(θ, σ²)` under the (untruncated) NIG distribution:
/// `ln IG(σ² | a, b) + ln N(θ | μ, σ² V)`.
pub fn nig_log_density(params: &NigParams, theta: &DVector<f64>, sigma2: f64) -> f64 {
    debug_assert_eq!(theta.len(), params.dim());
    if !(sigma2 > 0.0) {
        return f64::NEG_INFINITY;
    }
    let d = params.dim() as f64;
    let ig = params.a * params.b.ln() - ln_gamma(params.a) - (params.a + 1.0) * sigma2.ln()
        - params.b / sigma2;
    let diff = theta - &params.mu;
    let quad = params.mahalanobis_sq(&diff);
    let normal =
        -0.5 * d * (LN_2PI + sigma2.ln()) - 0.5 * params.log_det_v() - quad / (2.0 * sigma2);
    ig + normal
}

/// Cached normalizing constant of a box-truncated coefficient prior.
///
/// `log_z` is the Monte-Carlo estimate of `ln P(θ ∈ [−bound, bound]^d)` under
/// the given NIG distribution. The estimate is made once and reused for the
/// whole chain — any consistent value works, but it must not drift.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncationNorm {
    bound: f64,
    log_z: f64,
}

impl TruncationNorm {
    pub fn estimate<R: Rng + ?Sized>(
        params: &NigParams,
        bound: f64,
        draws: usize,
        rng: &mut R,
    ) -> Result<Self> {
        assert!(bound > 0.0 && draws > 0);
        let gamma = Gamma::new(params.a, 1.0)
            .map_err(|e| Error::Sampling(format!("invalid inverse-gamma shape: {e}")))?;
        let mut inside = 0usize;
        for _ in 0..draws {
            let g: f64 = gamma.sample(rng);
            let sigma = (params.b / g).sqrt();
            let z = DVector::from_fn(params.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
            let theta = &params.mu + (&params.chol_l * z) * sigma;
            if theta.iter().all(|t| t.abs() <= bound) {
                inside += 1;
            }
        }
        if inside == 0 {
            return Err(Error::Sampling(format!(
                "truncation box [−{bound}, {bound}] captured none of {draws} prior draws"
            )));
        }
        Ok(Self {
            bound,
            log_z: (inside as f64 / draws as f64).ln(),
        })
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn log_z(&self) -> f64 {
        self.log_z
    }

    /// Truncated log density given the untruncated one: −∞ outside the box,
    /// renormalized inside.
    pub fn apply(&self, theta: &DVector<f64>, untruncated_log_density: f64) -> f64 {
        if theta.iter().all(|t| t.abs() <= self.bound) {
            untruncated_log_density - self.log_z
        } else {
            f64::NEG_INFINITY
        }
    }
}
