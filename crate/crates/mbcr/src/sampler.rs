//! The reversible-jump chain driver: move-kind selection, the
//! Metropolis–Hastings acceptance step, burn-in/thinning, and diagnostics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::ln_gamma;

use crate::conjugate::{
    nig_log_density, nig_posterior, nig_sample, TruncationNorm, TRUNCATION_MC_DRAWS,
};
use crate::core::{
    log_likelihood, Dataset, Hyperplane, ModelState, PriorConfig, ProposalConfig,
};
use crate::error::{Error, Result};
use crate::proposals::{MoveKind, ProposalDraw, Proposer};

/// Chain length, burn-in, thinning, and the RNG seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
}

impl ChainConfig {
    pub fn new(iterations: usize, burn_in: usize, thin: usize, seed: u64) -> Result<Self> {
        let cfg = Self { iterations, burn_in, thin, seed };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.thin == 0 {
            return Err(Error::InvalidConfig(
                "iterations and thin must be positive".into(),
            ));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::InvalidConfig(format!(
                "burn_in {} must be smaller than iterations {}",
                self.burn_in, self.iterations
            )));
        }
        if self.retained() == 0 {
            return Err(Error::InvalidConfig(
                "no draws retained: iterations − burn_in < thin".into(),
            ));
        }
        Ok(())
    }

    /// Number of post-burn-in states the chain keeps.
    pub fn retained(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self { iterations: 1000, burn_in: 500, thin: 1, seed: 0 }
    }
}

/// Attempt/accept counts for one move kind.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MoveStats {
    pub attempts: usize,
    pub accepts: usize,
}

impl MoveStats {
    pub fn rate(&self) -> Option<f64> {
        (self.attempts > 0).then(|| self.accepts as f64 / self.attempts as f64)
    }
}

/// Per-iteration traces and acceptance counters. Trace lengths equal the
/// iteration count (burn-in included).
#[derive(Debug, Clone, Default)]
pub struct ChainDiagnostics {
    pub relocate: MoveStats,
    pub delete: MoveStats,
    pub add: MoveStats,
    pub k_trace: Vec<usize>,
    pub log_post_trace: Vec<f64>,
    /// Attempts rejected because an intermediate quantity was non-finite
    /// (conjugate updates failing, NaN in the acceptance ratio).
    pub numerical_rejections: usize,
}

impl ChainDiagnostics {
    pub fn acceptance_rate(&self, kind: MoveKind) -> Option<f64> {
        self.stats(kind).rate()
    }

    pub fn stats(&self, kind: MoveKind) -> &MoveStats {
        match kind {
            MoveKind::Relocate => &self.relocate,
            MoveKind::Delete => &self.delete,
            MoveKind::Add => &self.add,
        }
    }

    fn stats_mut(&mut self, kind: MoveKind) -> &mut MoveStats {
        match kind {
            MoveKind::Relocate => &mut self.relocate,
            MoveKind::Delete => &mut self.delete,
            MoveKind::Add => &mut self.add,
        }
    }

    /// Lag-`lag` autocorrelation of the model-size trace, the standard
    /// mixing diagnostic for a trans-dimensional chain. `None` when the
    /// trace is too short or constant.
    pub fn autocorrelation(&self, lag: usize) -> Option<f64> {
        let n = self.k_trace.len();
        if lag >= n {
            return None;
        }
        let series: Vec<f64> = self.k_trace.iter().map(|&k| k as f64).collect();
        let mean = series.iter().sum::<f64>() / n as f64;
        let var: f64 = series.iter().map(|z| (z - mean) * (z - mean)).sum();
        if var == 0.0 {
            return None;
        }
        let cov: f64 = (0..n - lag)
            .map(|t| (series[t] - mean) * (series[t + lag] - mean))
            .sum();
        Some(cov / var)
    }
}

/// Retained posterior draws together with the configuration that produced
/// them.
#[derive(Debug, Clone)]
pub struct PosteriorSamples {
    draws: Vec<ModelState>,
    dim: usize,
    pub prior: PriorConfig,
    pub proposal: ProposalConfig,
    pub chain: ChainConfig,
}

impl PosteriorSamples {
    pub fn new(
        draws: Vec<ModelState>,
        prior: PriorConfig,
        proposal: ProposalConfig,
        chain: ChainConfig,
    ) -> Result<Self> {
        let Some(first) = draws.first() else {
            return Err(Error::InvalidInput("posterior samples cannot be empty".into()));
        };
        let dim = first.dim();
        if draws.iter().any(|d| d.dim() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, got: 0 });
        }
        Ok(Self { draws, dim, prior, proposal, chain })
    }

    pub fn draws(&self) -> &[ModelState] {
        &self.draws
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        false // the constructor rejects empty draw lists
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

fn poisson_ln_pmf(j: usize, lambda: f64) -> f64 {
    j as f64 * lambda.ln() - lambda - ln_gamma(j as f64 + 1.0)
}

/// Log prior of a state: Poisson(λ) pmf on `K − 1` plus the NIG prior
/// density of every hyperplane, renormalized to the truncation box when one
/// is configured (−∞ for parameters outside it).
pub fn log_prior(state: &ModelState, prior: &PriorConfig, trunc: Option<&TruncationNorm>) -> f64 {
    let mut lp = poisson_ln_pmf(state.k() - 1, prior.lambda);
    for plane in state.planes() {
        let theta = plane_theta(plane);
        let d = nig_log_density(&prior.nig, &theta, plane.sigma2);
        lp += match trunc {
            Some(t) => t.apply(&theta, d),
            None => d,
        };
    }
    lp
}

/// `min(0, Δloglik + Δlogprior + log_reverse − log_forward)` in log space.
/// A NaN or +∞ total signals a numerical breakdown and maps to −∞ (sure
/// rejection); −∞ itself is an ordinary rejection of an unreachable
/// candidate.
pub fn log_acceptance(
    current: &ModelState,
    draw: &ProposalDraw,
    data: &Dataset,
    prior: &PriorConfig,
    trunc: Option<&TruncationNorm>,
) -> f64 {
    let cur_ll = log_likelihood(current, data);
    let cur_lp = log_prior(current, prior, trunc);
    acceptance_parts(cur_ll, cur_lp, draw, data, prior, trunc).log_alpha
}

struct AcceptanceParts {
    log_alpha: f64,
    cand_ll: f64,
    cand_lp: f64,
    numerical: bool,
}

fn acceptance_parts(
    cur_ll: f64,
    cur_lp: f64,
    draw: &ProposalDraw,
    data: &Dataset,
    prior: &PriorConfig,
    trunc: Option<&TruncationNorm>,
) -> AcceptanceParts {
    let cand_ll = log_likelihood(&draw.candidate, data);
    let cand_lp = log_prior(&draw.candidate, prior, trunc);
    let total = (cand_ll - cur_ll) + (cand_lp - cur_lp) + (draw.log_reverse - draw.log_forward);
    if total.is_nan() || total == f64::INFINITY {
        return AcceptanceParts { log_alpha: f64::NEG_INFINITY, cand_ll, cand_lp, numerical: true };
    }
    AcceptanceParts { log_alpha: total.min(0.0), cand_ll, cand_lp, numerical: false }
}

fn plane_theta(plane: &Hyperplane) -> nalgebra::DVector<f64> {
    let mut theta = nalgebra::DVector::zeros(plane.beta.len() + 1);
    theta[0] = plane.alpha;
    for j in 0..plane.beta.len() {
        theta[j + 1] = plane.beta[j];
    }
    theta
}

/// One chain step's bookkeeping shared by the full and the K-pinned drivers.
struct ChainRun<'a> {
    proposer: Proposer<'a>,
    trunc: Option<TruncationNorm>,
    state: ModelState,
    cur_ll: f64,
    cur_lp: f64,
    diagnostics: ChainDiagnostics,
    numerical_cap: usize,
}

impl<'a> ChainRun<'a> {
    /// Initializes at `K = 1` with the hyperplane drawn from the full-data
    /// NIG posterior under the *prior* hyperparameters; the truncation norm
    /// (when configured) is estimated once, up front, from the chain RNG.
    fn start(
        data: &'a Dataset,
        prior: &'a PriorConfig,
        proposal: &'a ProposalConfig,
        chain: &ChainConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        chain.validate()?;
        let proposer = Proposer::new(data, prior, proposal)?;
        let trunc = match prior.truncation {
            Some(bound) => Some(TruncationNorm::estimate(
                &prior.nig,
                bound,
                TRUNCATION_MC_DRAWS,
                rng,
            )?),
            None => None,
        };
        let rows: Vec<usize> = (0..data.n()).collect();
        let post = nig_posterior(&prior.nig, data, &rows)?;
        let (theta, sigma2) = nig_sample(&post, prior.truncation, rng)?;
        let beta = nalgebra::DVector::from_fn(data.dim(), |j, _| theta[j + 1]);
        let state = ModelState::new(vec![Hyperplane::new(theta[0], beta, sigma2)?])?;
        let cur_ll = log_likelihood(&state, data);
        let cur_lp = log_prior(&state, prior, trunc.as_ref());
        Ok(Self {
            proposer,
            trunc,
            state,
            cur_ll,
            cur_lp,
            diagnostics: ChainDiagnostics::default(),
            numerical_cap: (chain.iterations / 100).max(10),
        })
    }

    fn note_numerical(&mut self, kind: MoveKind) -> Result<()> {
        self.diagnostics.stats_mut(kind).attempts += 1;
        self.diagnostics.numerical_rejections += 1;
        if self.diagnostics.numerical_rejections > self.numerical_cap {
            return Err(Error::Chain(format!(
                "{} numerical rejections exceed the cap of {}",
                self.diagnostics.numerical_rejections, self.numerical_cap
            )));
        }
        Ok(())
    }

    /// Attempts one move of the given kind; updates the state on acceptance.
    fn step(&mut self, kind: MoveKind, rng: &mut ChaCha8Rng) -> Result<()> {
        let proposed = match kind {
            MoveKind::Relocate => self.proposer.propose_relocation(&self.state, rng).map(Some),
            MoveKind::Delete => self.proposer.propose_deletion(&self.state, rng).map(Some),
            MoveKind::Add => self.proposer.propose_addition(&self.state, rng),
        };
        let draw = match proposed {
            Ok(Some(draw)) => draw,
            Ok(None) => {
                // No splittable region: the addition attempt is burned.
                self.diagnostics.stats_mut(kind).attempts += 1;
                return Ok(());
            }
            Err(Error::Numerical(_)) => return self.note_numerical(kind),
            Err(e) => return Err(e),
        };
        let parts = acceptance_parts(
            self.cur_ll,
            self.cur_lp,
            &draw,
            self.proposer.data,
            self.proposer.prior,
            self.trunc.as_ref(),
        );
        if parts.numerical {
            return self.note_numerical(kind);
        }
        self.diagnostics.stats_mut(kind).attempts += 1;
        let u: f64 = rng.random();
        if u.ln() < parts.log_alpha {
            self.diagnostics.stats_mut(kind).accepts += 1;
            self.state = draw.candidate;
            self.cur_ll = parts.cand_ll;
            self.cur_lp = parts.cand_lp;
        }
        Ok(())
    }

    fn record_iteration(&mut self) {
        self.diagnostics.k_trace.push(self.state.k());
        self.diagnostics.log_post_trace.push(self.cur_ll + self.cur_lp);
    }
}

/// Runs the reversible-jump chain: each iteration picks add/delete/relocate
/// with probabilities `(b_K, d_K, r_K)`, attempts the move, and records the
/// state. Post-burn-in states are retained every `thin` iterations. Fully
/// deterministic given the seed.
pub fn run_chain(
    data: &Dataset,
    prior: &PriorConfig,
    proposal: &ProposalConfig,
    chain: &ChainConfig,
) -> Result<(PosteriorSamples, ChainDiagnostics)> {
    let mut rng = ChaCha8Rng::seed_from_u64(chain.seed);
    let mut run = ChainRun::start(data, prior, proposal, chain, &mut rng)?;
    let mut draws = Vec::with_capacity(chain.retained());
    for t in 1..=chain.iterations {
        let jump = run.proposer.jump(run.state.k());
        let u: f64 = rng.random();
        let kind = if u < jump.add {
            MoveKind::Add
        } else if u < jump.add + jump.delete {
            MoveKind::Delete
        } else {
            MoveKind::Relocate
        };
        run.step(kind, &mut rng)?;
        run.record_iteration();
        if t > chain.burn_in && (t - chain.burn_in) % chain.thin == 0 {
            draws.push(run.state.clone());
        }
    }
    let samples = PosteriorSamples::new(draws, prior.clone(), proposal.clone(), *chain)?;
    Ok((samples, run.diagnostics))
}

/// A validation chain with `K` pinned at 1: every iteration is a relocation
/// attempt. With the proposal hyperparameters equal to the prior's this is
/// an independence sampler drawing exactly from the conjugate posterior, the
/// strongest available correctness check of the acceptance machinery.
pub fn fixed_k_validation_chain(
    data: &Dataset,
    prior: &PriorConfig,
    proposal: &ProposalConfig,
    chain: &ChainConfig,
) -> Result<(PosteriorSamples, ChainDiagnostics)> {
    let mut rng = ChaCha8Rng::seed_from_u64(chain.seed);
    let mut run = ChainRun::start(data, prior, proposal, chain, &mut rng)?;
    let mut draws = Vec::with_capacity(chain.retained());
    for t in 1..=chain.iterations {
        run.step(MoveKind::Relocate, &mut rng)?;
        run.record_iteration();
        if t > chain.burn_in && (t - chain.burn_in) % chain.thin == 0 {
            draws.push(run.state.clone());
        }
    }
    let samples = PosteriorSamples::new(draws, prior.clone(), proposal.clone(), *chain)?;
    Ok((samples, run.diagnostics))
}
