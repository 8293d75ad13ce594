//! Least-squares convex regression: minimize Σ(y_i − ŷ_i)² subject to the
//! n(n−1) supporting-hyperplane constraints ŷ_j ≥ ŷ_i + g_iᵀ(x_j − x_i).
//!
//! Solved by an operator-splitting (ADMM) scheme with over-relaxation. The
//! constraint matrix is never materialized — rows are applied on the fly
//! from the covariates — and the KKT system is solved by eliminating the ŷ
//! block, whose matrix is c₁I − 2ρ·11ᵀ and inverts analytically, leaving
//! one np×np Cholesky factorization per penalty value.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::core::Dataset;
use crate::error::{Error, Result};

/// Default cap on training size; the constraint count grows as n².
pub const LSE_DEFAULT_N_CAP: usize = 500;

const MAX_ITERATIONS: usize = 50_000;
const SIGMA: f64 = 1e-6; // proximal regularization
const ALPHA: f64 = 1.6; // over-relaxation
const RHO_INIT: f64 = 0.1;
const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const CHECK_EVERY: usize = 5;
const ADAPT_EVERY: usize = 250;
const POLISH_DELTA: f64 = 1e-7; // regularization of the polish KKT system
const POLISH_REFINEMENTS: usize = 6;
const POLISH_ROUNDS: usize = 96; // working-set revisions per polish attempt
const POLISH_GREEDY_ROUNDS: usize = 6; // all-at-once releases before going one-at-a-time
// An active row is dropped from the equality solve when its pivot shows it
// (nearly) dependent on earlier rows. Genuine marginal content keeps the
// pivot around ‖content‖²/δ, so this only catches rows at the cancellation
// noise floor; anything above it must be enforced — rows tied to
// near-coincident covariates legitimately combine small pivots with large
// multipliers.
const POLISH_DROP_TOL: f64 = 10.0 * POLISH_DELTA;

/// Solution of the constrained least-squares fit.
#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    /// Fitted values ŷ, one per training point.
    pub yhat: DVector<f64>,
    /// Subgradients, one row per training point.
    pub g: DMatrix<f64>,
    /// Σ(y_i − ŷ_i)² at the returned iterate.
    pub objective: f64,
    /// max(primal, dual) residual at exit.
    pub kkt_residual: f64,
    pub iterations: usize,
}

/// The induced estimator: f̂(x) = max_i(ŷ_i + g_iᵀ(x − x_i)), anchored at
/// the training covariates.
pub fn lse_predict(sol: &QpSolution, data: &Dataset, x: &[f64]) -> f64 {
    assert_eq!(sol.yhat.len(), data.n(), "solution/anchor size mismatch");
    assert_eq!(x.len(), data.dim(), "query dimension mismatch");
    let n = data.n();
    let p = data.dim();
    let mut best = f64::NEG_INFINITY;
    for i in 0..n {
        let mut v = sol.yhat[i];
        for j in 0..p {
            v += sol.g[(i, j)] * (x[j] - data.x()[(i, j)]);
        }
        best = best.max(v);
    }
    best
}

pub fn lse_fit(data: &Dataset, tolerance: f64) -> Result<QpSolution> {
    lse_fit_with_cap(data, tolerance, LSE_DEFAULT_N_CAP)
}

pub fn lse_fit_with_cap(data: &Dataset, tolerance: f64, n_cap: usize) -> Result<QpSolution> {
    if !(tolerance > 0.0) || !tolerance.is_finite() {
        return Err(Error::InvalidInput(format!("tolerance must be positive, got {tolerance}")));
    }
    if data.n() > n_cap {
        return Err(Error::InvalidInput(format!(
            "{} training points exceed the cap of {n_cap} (n² constraints)",
            data.n()
        )));
    }
    let n = data.n();
    let p = data.dim();
    if n == 1 {
        // No pairwise constraints: interpolate with a flat plane.
        return Ok(QpSolution {
            yhat: data.y().clone(),
            g: DMatrix::zeros(1, p),
            objective: 0.0,
            kkt_residual: 0.0,
            iterations: 0,
        });
    }
    Admm::new(data).solve(tolerance)
}

/// Applies the constraint matrix (one row per ordered pair i≠j, value
/// ŷ_j − ŷ_i − (x_j − x_i)ᵀg_i) and its transpose without materializing it.
struct PairOperator<'a> {
    x: &'a DMatrix<f64>,
    n: usize,
    p: usize,
}

impl PairOperator<'_> {
    fn rows(&self) -> usize {
        self.n * (self.n - 1)
    }

    fn apply(&self, yhat: &DVector<f64>, g: &DVector<f64>, out: &mut DVector<f64>) {
        let mut r = 0;
        for i in 0..self.n {
            for j in 0..self.n {
                if j == i {
                    continue;
                }
                let mut v = yhat[j] - yhat[i];
                for l in 0..self.p {
                    v -= (self.x[(j, l)] - self.x[(i, l)]) * g[i * self.p + l];
                }
                out[r] = v;
                r += 1;
            }
        }
    }

    fn apply_transpose(&self, v: &DVector<f64>, out_y: &mut DVector<f64>, out_g: &mut DVector<f64>) {
        out_y.fill(0.0);
        out_g.fill(0.0);
        let mut r = 0;
        for i in 0..self.n {
            for j in 0..self.n {
                if j == i {
                    continue;
                }
                let w = v[r];
                out_y[j] += w;
                out_y[i] -= w;
                for l in 0..self.p {
                    out_g[i * self.p + l] -= w * (self.x[(j, l)] - self.x[(i, l)]);
                }
                r += 1;
            }
        }
    }
}

/// Factorization of P + σI + ρAᵀA for a fixed ρ. The ŷ block c₁I − 2ρ·11ᵀ
/// inverts via Sherman–Morrison (a·I + b·11ᵀ), so only the g-block Schur
/// complement needs a Cholesky.
struct KktFactor {
    a: f64,
    b: f64,
    rho: f64,
    chol: Cholesky<f64, Dyn>,
}

struct Admm<'a> {
    data: &'a Dataset,
    op: PairOperator<'a>,
    /// Horizontal concatenation [C_1 … C_n] of the ŷ–g coupling blocks of
    /// AᵀA; column sums are zero, which drops the rank-one term from the
    /// Schur complement.
    c: DMatrix<f64>,
    ctc: DMatrix<f64>,
    /// g-block diagonal blocks D_i = Σ_j (x_j − x_i)(x_j − x_i)ᵀ of AᵀA.
    d_blocks: Vec<DMatrix<f64>>,
}

impl<'a> Admm<'a> {
    fn new(data: &'a Dataset) -> Self {
        let n = data.n();
        let p = data.dim();
        let x = data.x();
        let s = DVector::from_fn(p, |l, _| (0..n).map(|j| x[(j, l)]).sum());
        let gram = x.tr_mul(x); // XᵀX, p×p

        let mut c = DMatrix::zeros(n, n * p);
        for i in 0..n {
            for l in 0..p {
                for j in 0..n {
                    c[(j, i * p + l)] = if j == i {
                        s[l] - n as f64 * x[(i, l)]
                    } else {
                        -(x[(j, l)] - x[(i, l)])
                    };
                }
            }
        }
        let ctc = c.tr_mul(&c);

        let mut d_blocks = Vec::with_capacity(n);
        for i in 0..n {
            let xi = DVector::from_fn(p, |l, _| x[(i, l)]);
            // D_i = XᵀX − x_iSᵀ − Sx_iᵀ + n·x_ix_iᵀ
            let mut d = gram.clone();
            d.ger(-1.0, &xi, &s, 1.0);
            d.ger(-1.0, &s, &xi, 1.0);
            d.ger(n as f64, &xi, &xi, 1.0);
            d_blocks.push(d);
        }

        Self { data, op: PairOperator { x, n, p }, c, ctc, d_blocks }
    }

    fn factor(&self, rho: f64) -> Result<KktFactor> {
        let n = self.op.n;
        let p = self.op.p;
        let c1 = 2.0 + SIGMA + 2.0 * rho * n as f64;
        let a = 1.0 / c1;
        let b = 2.0 * rho / (c1 * (2.0 + SIGMA)); // c₁ − 2ρn = 2 + σ
        let mut schur = &self.ctc * (-rho * rho * a);
        for i in 0..n {
            for l in 0..p {
                for m in 0..p {
                    schur[(i * p + l, i * p + m)] += rho * self.d_blocks[i][(l, m)];
                }
                schur[(i * p + l, i * p + l)] += SIGMA;
            }
        }
        let chol = Cholesky::new(schur).ok_or_else(|| {
            Error::Numerical("KKT Schur complement lost positive definiteness".into())
        })?;
        Ok(KktFactor { a, b, rho, chol })
    }

    /// Solves (P + σI + ρAᵀA)(u_y, u_g) = (r_y, r_g).
    fn kkt_solve(
        &self,
        f: &KktFactor,
        r_y: &DVector<f64>,
        r_g: &DVector<f64>,
        u_y: &mut DVector<f64>,
        u_g: &mut DVector<f64>,
    ) {
        // h = K_yy⁻¹ r_y with K_yy⁻¹ = aI + b·11ᵀ
        let sum_y = r_y.sum();
        let h = DVector::from_fn(r_y.len(), |i, _| f.a * r_y[i] + f.b * sum_y);
        let mut rhs_g = r_g.clone();
        rhs_g.gemv_tr(-f.rho, &self.c, &h, 1.0);
        u_g.copy_from(&rhs_g);
        f.chol.solve_mut(u_g);
        let mut t = r_y.clone();
        t.gemv(-f.rho, &self.c, u_g, 1.0);
        let sum_t = t.sum();
        for i in 0..t.len() {
            u_y[i] = f.a * t[i] + f.b * sum_t;
        }
    }

    fn solve(&self, tolerance: f64) -> Result<QpSolution> {
        let n = self.op.n;
        let p = self.op.p;
        let m = self.op.rows();
        let y_data = self.data.y();

        // Iterates: (ŷ, g) primal, z constraint copy, w duals.
        let mut xy = y_data.clone();
        let mut xg: DVector<f64> = DVector::zeros(n * p);
        let mut z: DVector<f64> = DVector::zeros(m);
        self.op.apply(&xy, &xg, &mut z);
        z.apply(|v| *v = v.max(0.0));
        let mut w: DVector<f64> = DVector::zeros(m);

        let mut rho = RHO_INIT;
        let mut factor = self.factor(rho)?;

        // Work buffers.
        let mut tmp_m: DVector<f64> = DVector::zeros(m);
        let mut zt: DVector<f64> = DVector::zeros(m);
        let mut ax: DVector<f64> = DVector::zeros(m);
        let mut aty: DVector<f64> = DVector::zeros(n);
        let mut atg: DVector<f64> = DVector::zeros(n * p);
        let mut r_y: DVector<f64> = DVector::zeros(n);
        let mut r_g: DVector<f64> = DVector::zeros(n * p);
        let mut ut_y: DVector<f64> = DVector::zeros(n);
        let mut ut_g: DVector<f64> = DVector::zeros(n * p);

        let mut last_primal = f64::INFINITY;
        let mut last_dual = f64::INFINITY;
        // ADMM closes in linearly; once it is moderately converged the
        // active set is read off and an exact equality-constrained solve
        // (polish) jumps to machine-level KKT residuals. Failed polishes
        // back off so the iterate can drift to a better active-set guess.
        let polish_at = tolerance.max(1e-3);
        let mut polish_after = 0usize;
        let mut polish_cooldown = 250usize;

        for it in 1..=MAX_ITERATIONS {
            // rhs = σx − q + Aᵀ(ρz − w); −q = (2y, 0)
            for r in 0..m {
                tmp_m[r] = rho * z[r] - w[r];
            }
            self.op.apply_transpose(&tmp_m, &mut aty, &mut atg);
            for i in 0..n {
                r_y[i] = SIGMA * xy[i] + 2.0 * y_data[i] + aty[i];
            }
            for i in 0..n * p {
                r_g[i] = SIGMA * xg[i] + atg[i];
            }
            self.kkt_solve(&factor, &r_y, &r_g, &mut ut_y, &mut ut_g);
            self.op.apply(&ut_y, &ut_g, &mut zt);

            for i in 0..n {
                xy[i] = ALPHA * ut_y[i] + (1.0 - ALPHA) * xy[i];
            }
            for i in 0..n * p {
                xg[i] = ALPHA * ut_g[i] + (1.0 - ALPHA) * xg[i];
            }
            for r in 0..m {
                let relaxed: f64 = ALPHA * zt[r] + (1.0 - ALPHA) * z[r];
                let projected = (relaxed + w[r] / rho).max(0.0);
                w[r] += rho * (relaxed - projected);
                z[r] = projected;
            }

            if it % CHECK_EVERY == 0 || it == MAX_ITERATIONS {
                self.op.apply(&xy, &xg, &mut ax);
                let mut r_prim: f64 = 0.0;
                for r in 0..m {
                    r_prim = r_prim.max((ax[r] - z[r]).abs());
                }
                self.op.apply_transpose(&w, &mut aty, &mut atg);
                let mut r_dual: f64 = 0.0;
                for i in 0..n {
                    r_dual = r_dual.max((2.0 * xy[i] - 2.0 * y_data[i] + aty[i]).abs());
                }
                for i in 0..n * p {
                    r_dual = r_dual.max(atg[i].abs());
                }
                last_primal = r_prim;
                last_dual = r_dual;

                if r_prim < tolerance && r_dual < tolerance {
                    return Ok(self.finish(&xy, &xg, r_prim.max(r_dual), it));
                }
                if r_prim < polish_at && r_dual < polish_at && it >= polish_after {
                    let center =
                        DVector::from_fn(n * (1 + p), |c, _| if c < n { xy[c] } else { xg[c - n] });
                    if let Some(sol) = self.polish(&z, &w, &center, tolerance, it) {
                        return Ok(sol);
                    }
                    polish_after = it + polish_cooldown;
                    polish_cooldown *= 2;
                }

                if it % ADAPT_EVERY == 0 {
                    let norm_ax = ax.amax().max(z.amax()).max(1e-10);
                    let mut norm_dual = (2.0 * y_data.amax()).max(1e-10);
                    for i in 0..n {
                        norm_dual = norm_dual.max((2.0 * xy[i]).abs()).max(aty[i].abs());
                    }
                    for i in 0..n * p {
                        norm_dual = norm_dual.max(atg[i].abs());
                    }
                    let ratio = ((r_prim / norm_ax) / (r_dual / norm_dual).max(1e-16)).sqrt();
                    if ratio > 5.0 || ratio < 0.2 {
                        rho = (rho * ratio).clamp(RHO_MIN, RHO_MAX);
                        factor = self.factor(rho)?;
                    }
                }
            }
        }
        Err(Error::SolverNonConvergence(format!(
            "least-squares fit stalled after {MAX_ITERATIONS} iterations \
             (primal {last_primal:.3e}, dual {last_dual:.3e}, tolerance {tolerance:.1e})"
        )))
    }

    fn finish(&self, xy: &DVector<f64>, xg: &DVector<f64>, kkt: f64, iterations: usize) -> QpSolution {
        let n = self.op.n;
        let p = self.op.p;
        let g = DMatrix::from_fn(n, p, |i, l| xg[i * p + l]);
        let objective = (self.data.y() - xy).norm_squared();
        QpSolution { yhat: xy.clone(), g, objective, kkt_residual: kkt, iterations }
    }

    /// Active-set polish. Constraint rows whose ADMM duals are clearly
    /// negative seed a working set of equalities; each round solves the
    /// equality-constrained problem exactly, then releases rows with
    /// wrong-sign multipliers and pins violated rows. A stable working set
    /// is a KKT point and is returned after a full optimality check.
    /// Returns `None` when no stable set emerges within the work budget,
    /// in which case the ADMM loop keeps iterating.
    ///
    /// The subgradients are not unique: away from its bounding rows each
    /// gᵢ is free, so the equality solves are centered on the current
    /// iterate to keep those free components where ADMM left them instead
    /// of dragging them out of the feasible region.
    fn polish(
        &self,
        z: &DVector<f64>,
        w: &DVector<f64>,
        center: &DVector<f64>,
        tolerance: f64,
        iterations: usize,
    ) -> Option<QpSolution> {
        use std::collections::HashSet;
        use std::hash::{DefaultHasher, Hash, Hasher};

        let n = self.op.n;
        let p = self.op.p;
        let m = self.op.rows();
        // Seed only rows where both complementarity signals agree; a
        // not-yet-converged dual alone can point at a row with real slack,
        // and pinning such a row bends the fit violently. Leaving a true
        // row out is benign — the solve then violates it and the pin step
        // below picks it up. Ascending; equality_solve keeps multipliers
        // in this order.
        let mut active: Vec<usize> =
            (0..m).filter(|&r| z[r] == 0.0 && w[r] < -1e-9).collect();
        let mut member = vec![false; m];
        let mut seen: HashSet<u64> = HashSet::new();
        let mut budget: f64 = 2e9; // factorization flops per attempt

        for round in 0..POLISH_ROUNDS {
            let nsys = (n * (1 + p) + active.len()) as f64;
            if nsys > 2400.0 {
                return None; // dense KKT system too large; keep iterating
            }
            let mut hasher = DefaultHasher::new();
            active.hash(&mut hasher);
            if !seen.insert(hasher.finish()) {
                return None; // working set cycled
            }
            budget -= nsys * nsys * nsys / 3.0;
            if budget < 0.0 {
                return None;
            }
            let (xv, nu) = self.equality_solve(&active, center)?;
            // A solve that lands far from the (moderately converged) ADMM
            // iterate means the working set pinned rows that force a
            // near-singular system; revising such a set row by row churns
            // for many rounds without recovering, so give up at once and
            // let the outer iteration improve the active-set estimate.
            let travel = (&xv - center).amax();
            if travel > 10.0 * (1.0 + center.amax()) {
                return None;
            }
            let xy = DVector::from_fn(n, |i, _| xv[i]);
            let xg = DVector::from_fn(n * p, |c, _| xv[n + c]);
            let mut ax = DVector::zeros(m);
            self.op.apply(&xy, &xg, &mut ax);
            // Rows violated by less than the target tolerance are already
            // acceptable; pinning them just churns the working set with
            // numerically tied rows.
            let pin_eps = 0.1 * tolerance;

            // A positive multiplier marks a row the optimum pushes away
            // from; the threshold sits well above the noise on multipliers
            // of objective-indifferent rows, which must stay pinned.
            // Releasing all offenders at once converges fastest but can
            // cycle on degenerate sets, so after a few rounds fall back to
            // releasing only the worst one per round.
            let release_eps = if active.is_empty() { f64::INFINITY } else { 1e-6 * nu.amax().max(1.0) };
            let mut release = vec![false; active.len()];
            if round < POLISH_GREEDY_ROUNDS {
                for (s, &v) in nu.iter().enumerate() {
                    release[s] = v > release_eps;
                }
            } else if let Some(s) = (0..active.len())
                .filter(|&s| nu[s] > release_eps)
                .max_by(|&a, &b| nu[a].total_cmp(&nu[b]))
            {
                release[s] = true;
            }

            member.fill(false);
            for &r in &active {
                member[r] = true;
            }
            let mut next = Vec::with_capacity(active.len() + 8);
            let mut changed = false;
            let mut s = 0;
            for r in 0..m {
                if member[r] {
                    if release[s] {
                        changed = true;
                    } else {
                        next.push(r);
                    }
                    s += 1;
                } else if ax[r] < -pin_eps {
                    next.push(r);
                    changed = true;
                }
            }
            if changed {
                active = next;
                continue;
            }

            // Stable set: verify stationarity and feasibility on the full
            // problem, with multipliers zero off the working set.
            let mut r_dual = self.neg_gradient(&xv);
            r_dual -= self.active_rows(&active).tr_mul(&nu);
            let dual = r_dual.amax();
            let violation = -(ax.min().min(0.0));
            if dual > tolerance || violation > tolerance {
                return None;
            }
            return Some(self.finish(&xy, &xg, dual.max(violation), iterations));
        }
        None
    }

    /// −(Px + q) for the quadratic objective ‖ŷ − y‖²; zero on the g block.
    fn neg_gradient(&self, xv: &DVector<f64>) -> DVector<f64> {
        let n = self.op.n;
        let mut out = DVector::zeros(xv.len());
        for i in 0..n {
            out[i] = 2.0 * self.data.y()[i] - 2.0 * xv[i];
        }
        out
    }

    /// Dense constraint rows of the working set, in (ŷ, g) coordinates.
    fn active_rows(&self, active: &[usize]) -> DMatrix<f64> {
        let n = self.op.n;
        let p = self.op.p;
        let x_mat = self.data.x();
        let mut a_act = DMatrix::zeros(active.len(), n * (1 + p));
        for (s, &r) in active.iter().enumerate() {
            let (i, j) = pair_of(r, n);
            a_act[(s, j)] += 1.0;
            a_act[(s, i)] -= 1.0;
            for l in 0..p {
                a_act[(s, n + i * p + l)] = -(x_mat[(j, l)] - x_mat[(i, l)]);
            }
        }
        a_act
    }

    /// Minimizes the objective subject to the working-set rows as
    /// equalities, via an LDLᵀ factorization of the δ-regularized KKT
    /// matrix [[P̃, Aᵀ], [A, −δI]] plus iterative refinement against the
    /// unregularized system. The regularization is proximal about
    /// `center`, which pins objective-indifferent components there.
    /// Returns the primal point and the working-set multipliers.
    fn equality_solve(
        &self,
        active: &[usize],
        center: &DVector<f64>,
    ) -> Option<(DVector<f64>, DVector<f64>)> {
        let n = self.op.n;
        let nn = n * (1 + self.op.p); // ŷ at 0..n, g_i at n + i·p
        let a = active.len();
        let a_act = self.active_rows(active);
        let nsys = nn + a;

        // Quasidefinite, so the factorization exists without pivoting. A
        // constraint row that is (nearly) dependent on earlier ones leaves
        // its pivot at ≈ −δ; enforcing such a row exactly would drag the
        // solution far along an ill-conditioned direction, so those rows
        // are neutralized instead (multiplier forced to zero).
        let mut kkt = vec![0.0; nsys * nsys];
        for c in 0..nn {
            kkt[c * nsys + c] = if c < n { 2.0 + POLISH_DELTA } else { POLISH_DELTA };
        }
        for s in 0..a {
            for c in 0..nn {
                kkt[c * nsys + nn + s] = a_act[(s, c)]; // lower triangle only
            }
            kkt[(nn + s) * nsys + nn + s] = -POLISH_DELTA;
        }
        if !ldlt_in_place(&mut kkt, nsys, nn, POLISH_DROP_TOL) {
            return None;
        }

        // Solves [[P̃, Aᵀ], [A, −δI]] (x, ν) = (r1, r2).
        let solve_reg = |r1: &DVector<f64>, r2: &DVector<f64>| {
            let mut rhs = DVector::zeros(nsys);
            rhs.rows_mut(0, nn).copy_from(r1);
            rhs.rows_mut(nn, a).copy_from(r2);
            ldlt_solve(&kkt, nsys, &mut rhs);
            (rhs.rows(0, nn).into_owned(), rhs.rows(nn, a).into_owned())
        };

        let rhs1 = self.neg_gradient(&DVector::zeros(nn)) + POLISH_DELTA * center;
        let (mut xv, mut nu) = solve_reg(&rhs1, &DVector::zeros(a));
        // Refine against the true system (P on the diagonal, no −δI). Each
        // correction is accepted only if it shrinks the true residual —
        // chasing exactness on a nearly singular working set diverges, and
        // a rejected step leaves the best iterate found so far in place.
        let residual = |xv: &DVector<f64>, nu: &DVector<f64>| {
            let r1 = self.neg_gradient(xv) - a_act.tr_mul(nu);
            let r2 = -(&a_act * xv);
            let norm = r1.amax().max(if a > 0 { r2.amax() } else { 0.0 });
            (r1, r2, norm)
        };
        let (mut r1, mut r2, mut rnorm) = residual(&xv, &nu);
        for _ in 0..POLISH_REFINEMENTS {
            if rnorm < 1e-12 {
                break;
            }
            let (dx, dnu) = solve_reg(&r1, &r2);
            let cx = &xv + &dx;
            let cnu = &nu + &dnu;
            let (c1, c2, cnorm) = residual(&cx, &cnu);
            if !cnorm.is_finite() || cnorm >= 0.5 * rnorm {
                break;
            }
            xv = cx;
            nu = cnu;
            (r1, r2, rnorm) = (c1, c2, cnorm);
        }
        Some((xv, nu))
    }
}

/// Dense LDLᵀ of a symmetric matrix stored column-major, lower triangle
/// only; L overwrites the strict lower triangle (unit diagonal implied)
/// and D the diagonal. Columns at or past `first_soft` whose pivot
/// magnitude falls below `drop_tol` are neutralized: the pivot is replaced
/// by a huge value so the corresponding solution component comes out zero.
/// Returns false when a pivot in the leading block collapses.
fn ldlt_in_place(m: &mut [f64], n: usize, first_soft: usize, drop_tol: f64) -> bool {
    for j in 0..n {
        let d = m[j * n + j];
        if j >= first_soft && d.abs() < drop_tol {
            m[j * n + j] = -1e300;
            for r in j + 1..n {
                m[j * n + r] = 0.0;
            }
            continue;
        }
        if d.abs() < 1e-300 {
            return false;
        }
        for r in j + 1..n {
            m[j * n + r] /= d;
        }
        for c in j + 1..n {
            let f = m[j * n + c] * d;
            if f == 0.0 {
                continue;
            }
            for r in c..n {
                m[c * n + r] -= m[j * n + r] * f;
            }
        }
    }
    true
}

/// Solves L D Lᵀ x = b in place against a factorization from
/// `ldlt_in_place`.
fn ldlt_solve(m: &[f64], n: usize, b: &mut DVector<f64>) {
    for j in 0..n {
        let v = b[j];
        if v != 0.0 {
            for r in j + 1..n {
                b[r] -= m[j * n + r] * v;
            }
        }
    }
    for j in 0..n {
        b[j] /= m[j * n + j];
    }
    for j in (0..n).rev() {
        let mut v = b[j];
        for r in j + 1..n {
            v -= m[j * n + r] * b[r];
        }
        b[j] = v;
    }
}

/// Ordered pair (i, j) of constraint row `r` under the row layout
/// `for i { for j != i }`.
fn pair_of(r: usize, n: usize) -> (usize, usize) {
    let i = r / (n - 1);
    let rem = r % (n - 1);
    let j = if rem >= i { rem + 1 } else { rem };
    (i, j)
}

/// Worst violation of ŷ_j ≥ ŷ_i + g_iᵀ(x_j − x_i) over all ordered pairs.
pub fn max_constraint_violation(sol: &QpSolution, data: &Dataset) -> f64 {
    let n = data.n();
    let p = data.dim();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let mut v = sol.yhat[i] - sol.yhat[j];
            for l in 0..p {
                v += sol.g[(i, l)] * (data.x()[(j, l)] - data.x()[(i, l)]);
            }
            worst = worst.max(v);
        }
    }
    worst
}
