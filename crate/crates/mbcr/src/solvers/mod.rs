//! Classical optimization companions to the Bayesian sampler: the
//! constrained least-squares estimator (a quadratic program over all
//! pairwise supporting-hyperplane constraints) and box-constrained
//! minimization of max-affine surrogates (a linear program).

mod lse;
mod simplex;

pub use lse::{
    lse_fit, lse_fit_with_cap, lse_predict, max_constraint_violation, QpSolution,
    LSE_DEFAULT_N_CAP,
};
pub use simplex::{minimize_surrogate, LpSolution};
