//! Domain types for max-affine convex regression: hyperplanes, model states,
//! datasets, and the partition of observations induced by a state.
//!
//! A model state is a finite set of hyperplanes; the regression function it
//! represents is their pointwise maximum, which is convex by construction.
//! Each observation is attributed to the hyperplane attaining that maximum,
//! and that attribution (the partition) drives both the likelihood and the
//! conjugate updates elsewhere in the crate.

use nalgebra::{DMatrix, DVector};

use crate::conjugate::NigParams;
use crate::error::{Error, Result};

pub(crate) const LN_2PI: f64 = 1.8378770664093453;

/// One affine piece `x ↦ α + βᵀx` together with its own noise variance.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperplane {
    pub alpha: f64,
    pub beta: DVector<f64>,
    pub sigma2: f64,
}

impl Hyperplane {
    pub fn new(alpha: f64, beta: DVector<f64>, sigma2: f64) -> Result<Self> {
        if !sigma2.is_finite() || sigma2 <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "hyperplane noise variance must be positive and finite, got {sigma2}"
            )));
        }
        if !alpha.is_finite() || beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidInput(
                "hyperplane coefficients must be finite".into(),
            ));
        }
        Ok(Self { alpha, beta, sigma2 })
    }

    /// The affine value `α + βᵀx` (no max involved).
    pub fn affine(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.beta.len());
        let mut v = self.alpha;
        for (b, xi) in self.beta.iter().zip(x) {
            v += b * xi;
        }
        v
    }
}

/// A max-affine model: `f(x) = max_k (α_k + β_kᵀ x)`, always with at least
/// one hyperplane.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    planes: Vec<Hyperplane>,
    dim: usize,
}

impl ModelState {
    /// Builds a state from hyperplanes. Fails on an empty list or mixed
    /// covariate dimensions.
    pub fn new(planes: Vec<Hyperplane>) -> Result<Self> {
        let first = planes
            .first()
            .ok_or_else(|| Error::InvalidInput("a model state needs at least one hyperplane".into()))?;
        let dim = first.beta.len();
        for p in &planes {
            if p.beta.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: p.beta.len(),
                });
            }
        }
        Ok(Self { planes, dim })
    }

    pub fn k(&self) -> usize {
        self.planes.len()
    }

    /// Covariate dimension `p`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn planes(&self) -> &[Hyperplane] {
        &self.planes
    }

    /// `max_k (α_k + β_kᵀ x)` — evaluates without allocating.
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.evaluate_argmax(x).1
    }

    /// Returns `(argmax, max)`. Ties go to the lowest hyperplane index so the
    /// attribution is deterministic.
    pub fn evaluate_argmax(&self, x: &[f64]) -> (usize, f64) {
        let mut best = 0usize;
        let mut best_v = self.planes[0].affine(x);
        for (k, plane) in self.planes.iter().enumerate().skip(1) {
            let v = plane.affine(x);
            if v > best_v {
                best = k;
                best_v = v;
            }
        }
        (best, best_v)
    }
}

/// Observed data: an `n × p` covariate matrix and a response vector, all
/// entries finite, `n ≥ 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(Error::InvalidInput("dataset must contain at least one row".into()));
        }
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.nrows(),
                got: y.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("dataset entries must be finite".into()));
        }
        Ok(Self { x, y })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    /// Covariate dimension `p`.
    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    /// Covariates of row `i` as a slice-backed iterator-friendly vec.
    /// nalgebra stores column-major, so this copies `p` values.
    pub fn x_row(&self, i: usize) -> Vec<f64> {
        (0..self.x.ncols()).map(|j| self.x[(i, j)]).collect()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    /// Componentwise (min, max) of the covariates; the natural probing box
    /// for certificates and prediction grids.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        let p = self.dim();
        let mut lo = vec![f64::INFINITY; p];
        let mut hi = vec![f64::NEG_INFINITY; p];
        for i in 0..self.n() {
            for j in 0..p {
                let v = self.x[(i, j)];
                if v < lo[j] {
                    lo[j] = v;
                }
                if v > hi[j] {
                    hi[j] = v;
                }
            }
        }
        (lo, hi)
    }
}

/// The partition induced by a state: every observation is attributed to the
/// hyperplane attaining the max at its covariates. Subsets may be empty.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    assignment: Vec<usize>,
    subsets: Vec<Vec<usize>>,
}

impl Partition {
    /// `assignment[i]` is the (0-based) index of the hyperplane observation
    /// `i` belongs to.
    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// `subsets[k]` lists the observations attributed to hyperplane `k`, in
    /// increasing order. Empty subsets are kept.
    pub fn subsets(&self) -> &[Vec<usize>] {
        &self.subsets
    }

    pub fn k(&self) -> usize {
        self.subsets.len()
    }
}

/// Attributes each observation to the hyperplane attaining the max there
/// (ties to the lowest index).
pub fn assign_partition(state: &ModelState, data: &Dataset) -> Partition {
    let mut assignment = Vec::with_capacity(data.n());
    let mut subsets = vec![Vec::new(); state.k()];
    let mut xbuf = vec![0.0; data.dim()];
    for i in 0..data.n() {
        for j in 0..data.dim() {
            xbuf[j] = data.x()[(i, j)];
        }
        let (k, _) = state.evaluate_argmax(&xbuf);
        assignment.push(k);
        subsets[k].push(i);
    }
    Partition { assignment, subsets }
}

/// Gaussian log-likelihood of the data under a state. Each observation uses
/// the noise variance of the hyperplane it is attributed to:
///
/// `Σ_i  −½ ln(2π σ²_{j(i)}) − (y_i − f(x_i))² / (2 σ²_{j(i)})`
pub fn log_likelihood(state: &ModelState, data: &Dataset) -> f64 {
    let mut ll = 0.0;
    let mut xbuf = vec![0.0; data.dim()];
    for i in 0..data.n() {
        for j in 0..data.dim() {
            xbuf[j] = data.x()[(i, j)];
        }
        let (k, fx) = state.evaluate_argmax(&xbuf);
        let s2 = state.planes()[k].sigma2;
        let r = data.y()[i] - fx;
        ll += -0.5 * (LN_2PI + s2.ln()) - r * r / (2.0 * s2);
    }
    ll
}

/// Prior over states: NIG hyperparameters shared by every hyperplane, a
/// Poisson prior on the number of pieces (`K − 1 ~ Poisson(λ)`), and an
/// optional box truncation of the coefficient prior.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorConfig {
    pub nig: NigParams,
    /// Mean of the Poisson prior on `K − 1`.
    pub lambda: f64,
    /// Optional half-width `V` of a coefficient box: when set, the prior on
    /// `(α, β)` is renormalized to `[−V, V]^{p+1}`.
    pub truncation: Option<f64>,
}

impl PriorConfig {
    pub fn new(nig: NigParams, lambda: f64, truncation: Option<f64>) -> Result<Self> {
        if !lambda.is_finite() || lambda <= 0.0 {
            return Err(Error::InvalidConfig(format!("lambda must be positive, got {lambda}")));
        }
        if let Some(v) = truncation {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "truncation half-width must be positive, got {v}"
                )));
            }
        }
        Ok(Self { nig, lambda, truncation })
    }

    /// Covariate dimension `p` implied by the hyperparameters.
    pub fn dim(&self) -> usize {
        self.nig.dim() - 1
    }

    /// The stock prior used by the CLI and benchmarks: μ = 0, V = 100·I,
    /// a = 2, b = 1, λ = 20, untruncated.
    pub fn default_for_dim(p: usize) -> Self {
        let nig = NigParams::new(
            DVector::zeros(p + 1),
            DMatrix::identity(p + 1, p + 1) * 100.0,
            2.0,
            1.0,
        )
        .expect("stock hyperparameters are valid");
        Self { nig, lambda: 20.0, truncation: None }
    }
}

/// How split directions are chosen when proposing a new hyperplane.
#[derive(Debug, Clone, PartialEq)]
pub enum DirectionMode {
    /// The `p` coordinate axes.
    Cardinal,
    /// `count` fresh standard-normal directions per attempt.
    Gaussian { count: usize },
}

/// Proposal-side configuration: the NIG hyperparameters the proposal
/// posteriors are built from, knot/direction granularity for splits, and the
/// constant `c` controlling how often jumps are attempted.
#[derive(Debug, Clone, PartialEq)]
pub struct ProposalConfig {
    pub nig: NigParams,
    /// Number of candidate knots per (region, direction) pair; `L ≥ 1`.
    pub knots_per_region: usize,
    pub directions: DirectionMode,
    /// Jump constant `c ∈ (0, 0.5]`: caps the add/delete probabilities.
    pub jump_constant: f64,
}

impl ProposalConfig {
    pub fn new(
        nig: NigParams,
        knots_per_region: usize,
        directions: DirectionMode,
        jump_constant: f64,
    ) -> Result<Self> {
        if knots_per_region == 0 {
            return Err(Error::InvalidConfig("knots_per_region must be at least 1".into()));
        }
        if let DirectionMode::Gaussian { count } = directions {
            if count == 0 {
                return Err(Error::InvalidConfig("direction count must be at least 1".into()));
            }
        }
        if !(jump_constant > 0.0 && jump_constant <= 0.5) {
            return Err(Error::InvalidConfig(format!(
                "jump constant must lie in (0, 0.5], got {jump_constant}"
            )));
        }
        Ok(Self {
            nig,
            knots_per_region,
            directions,
            jump_constant,
        })
    }

    /// The usual proposal setup: the prior's hyperparameters with the
    /// coefficient covariance shrunk by 4 (tighter proposals, same center).
    pub fn from_prior(prior: &PriorConfig, knots_per_region: usize, jump_constant: f64) -> Self {
        let mut nig = prior.nig.clone();
        nig.scale_v(0.25);
        Self {
            nig,
            knots_per_region,
            directions: DirectionMode::Cardinal,
            jump_constant,
        }
    }

    /// Number of directions enumerated per attempt for covariate dimension `p`.
    pub fn direction_count(&self, p: usize) -> usize {
        match self.directions {
            DirectionMode::Cardinal => p,
            DirectionMode::Gaussian { count } => count,
        }
    }
}
