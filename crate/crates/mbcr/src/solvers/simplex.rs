//! Box-constrained minimization of max-affine surrogates.
//!
//! The epigraph form — minimize (1/M)Σ_m t_m subject to
//! t_m ≥ α_mk + β_mkᵀx and x in the box — is solved with a bounded-variable
//! revised simplex. Each t_m gets finite bounds from its planes' box
//! extremes, so the all-slack basis (x at lower bounds, t at upper) is
//! feasible and no phase-1 is needed. Pricing is lexicographic over the
//! objectives (Σt/M, x₁, …, x_p), evaluated lazily, which lands on the
//! optimal vertex with the lexicographically smallest x — a deterministic
//! answer even when the surrogate has a flat bottom. Bland's rule guards
//! against cycling.

use nalgebra::{DMatrix, DVector};

use crate::core::ModelState;
use crate::error::{Error, Result};

const MAX_ITERATIONS: usize = 50_000;
const PRICE_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-10;
const REFACTOR_EVERY: usize = 64;

/// Minimizer of a max-affine surrogate over a box.
#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x_star: Vec<f64>,
    /// Surrogate value (1/M)Σ_m max_k(α_mk + β_mkᵀx*) at the minimizer.
    pub value: f64,
    pub iterations: usize,
}

/// Minimizes the average of the states' max-affine functions over
/// `[lower, upper]`. The box must be finite with `lower ≤ upper`.
pub fn minimize_surrogate(
    states: &[ModelState],
    lower: &[f64],
    upper: &[f64],
) -> Result<LpSolution> {
    let Some(first) = states.first() else {
        return Err(Error::InvalidInput("surrogate needs at least one hyperplane set".into()));
    };
    let p = first.dim();
    if states.iter().any(|s| s.dim() != p) {
        return Err(Error::DimensionMismatch { expected: p, got: 0 });
    }
    if lower.len() != p || upper.len() != p {
        return Err(Error::DimensionMismatch { expected: p, got: lower.len() });
    }
    for j in 0..p {
        if !lower[j].is_finite() || !upper[j].is_finite() || lower[j] > upper[j] {
            return Err(Error::MalformedBox(format!(
                "axis {j}: [{}, {}] is not a finite non-empty interval",
                lower[j], upper[j]
            )));
        }
    }
    Simplex::new(states, lower, upper).solve()
}

struct Simplex {
    p: usize,
    n_states: usize,
    rows: usize,
    cols: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    /// Per-row plane data: t_{state(r)} − beta(r)ᵀx − s_r = alpha(r).
    row_alpha: Vec<f64>,
    row_beta: DMatrix<f64>,
    state_start: Vec<usize>, // row range of state m is state_start[m]..state_start[m+1]
    /// Column bounds, layout [x₀..x_{p−1}, t₀..t_{M−1}, s₀..s_{R−1}].
    lo: Vec<f64>,
    up: Vec<f64>,
    c0: Vec<f64>,

    basis: Vec<usize>,
    basic_pos: Vec<Option<usize>>,
    at_upper: Vec<bool>,
    binv: DMatrix<f64>,
    xb: DVector<f64>,
    pivots_since_refactor: usize,
}

impl Simplex {
    fn new(states: &[ModelState], lower: &[f64], upper: &[f64]) -> Self {
        let p = states[0].dim();
        let n_states = states.len();
        let rows: usize = states.iter().map(|s| s.k()).sum();
        let cols = p + n_states + rows;

        let mut row_alpha = Vec::with_capacity(rows);
        let mut row_beta = DMatrix::zeros(rows, p);
        let mut state_start = Vec::with_capacity(n_states + 1);
        let mut lo = vec![0.0; cols];
        let mut up = vec![0.0; cols];
        let mut c0 = vec![0.0; cols];

        for j in 0..p {
            lo[j] = lower[j];
            up[j] = upper[j];
        }

        let mut r = 0;
        for (m, state) in states.iter().enumerate() {
            state_start.push(r);
            // t_m band over the box: the optimum has t_m = max_k plane_k(x*),
            // so [max_k min_box, max_k max_box] never cuts it off.
            let mut t_lo = f64::NEG_INFINITY;
            let mut t_up = f64::NEG_INFINITY;
            for plane in state.planes() {
                let mut vmin = plane.alpha;
                let mut vmax = plane.alpha;
                for j in 0..p {
                    let b = plane.beta[j];
                    vmin += b * if b >= 0.0 { lower[j] } else { upper[j] };
                    vmax += b * if b >= 0.0 { upper[j] } else { lower[j] };
                }
                t_lo = t_lo.max(vmin);
                t_up = t_up.max(vmax);
                row_alpha.push(plane.alpha);
                for j in 0..p {
                    row_beta[(r, j)] = plane.beta[j];
                }
                r += 1;
            }
            lo[p + m] = t_lo;
            up[p + m] = t_up;
            c0[p + m] = 1.0 / n_states as f64;
        }
        state_start.push(rows);

        for s in 0..rows {
            lo[p + n_states + s] = 0.0;
            up[p + n_states + s] = f64::INFINITY;
        }

        // Initial basis: all slacks (columns −e_r, so B = −I). Nonbasic x at
        // lower bounds, t at upper bounds keeps every slack non-negative.
        let basis: Vec<usize> = (0..rows).map(|s| p + n_states + s).collect();
        let mut basic_pos = vec![None; cols];
        for (k, &j) in basis.iter().enumerate() {
            basic_pos[j] = Some(k);
        }
        let mut at_upper = vec![false; cols];
        for m in 0..n_states {
            at_upper[p + m] = true;
        }
        let binv = DMatrix::from_diagonal_element(rows, rows, -1.0);

        let mut simplex = Self {
            p,
            n_states,
            rows,
            cols,
            lower: lower.to_vec(),
            upper: upper.to_vec(),
            row_alpha,
            row_beta,
            state_start,
            lo,
            up,
            c0,
            basis,
            basic_pos,
            at_upper,
            binv,
            xb: DVector::zeros(rows),
            pivots_since_refactor: 0,
        };
        simplex.recompute_basics();
        simplex
    }

    fn column_into(&self, j: usize, out: &mut DVector<f64>) {
        out.fill(0.0);
        if j < self.p {
            for r in 0..self.rows {
                out[r] = -self.row_beta[(r, j)];
            }
        } else if j < self.p + self.n_states {
            let m = j - self.p;
            for r in self.state_start[m]..self.state_start[m + 1] {
                out[r] = 1.0;
            }
        } else {
            out[j - self.p - self.n_states] = -1.0;
        }
    }

    fn nonbasic_value(&self, j: usize) -> f64 {
        if self.at_upper[j] {
            self.up[j]
        } else {
            self.lo[j]
        }
    }

    /// xb = B⁻¹(b − Σ_nonbasic A_j v_j), recomputed exactly.
    fn recompute_basics(&mut self) {
        let mut rhs = DVector::from_fn(self.rows, |r, _| self.row_alpha[r]);
        let mut col = DVector::zeros(self.rows);
        for j in 0..self.cols {
            if self.basic_pos[j].is_some() {
                continue;
            }
            let v = self.nonbasic_value(j);
            if v != 0.0 {
                self.column_into(j, &mut col);
                rhs.axpy(-v, &col, 1.0);
            }
        }
        self.xb.gemv(1.0, &self.binv, &rhs, 0.0);
    }

    fn refactor(&mut self) -> Result<()> {
        let mut b = DMatrix::zeros(self.rows, self.rows);
        let mut col = DVector::zeros(self.rows);
        for (k, &j) in self.basis.iter().enumerate() {
            self.column_into(j, &mut col);
            b.set_column(k, &col);
        }
        self.binv = b
            .try_inverse()
            .ok_or_else(|| Error::Numerical("singular simplex basis".into()))?;
        self.recompute_basics();
        self.pivots_since_refactor = 0;
        Ok(())
    }

    /// Reduced costs of the primary objective for every column, from the
    /// pricing vector λ = B⁻ᵀc_B exploiting the three column shapes.
    fn primary_reduced_costs(&self) -> Vec<f64> {
        let mut lambda = DVector::zeros(self.rows);
        for (k, &j) in self.basis.iter().enumerate() {
            let cb = self.c0[j];
            if cb != 0.0 {
                for r in 0..self.rows {
                    lambda[r] += cb * self.binv[(k, r)];
                }
            }
        }
        let mut reduced = vec![0.0; self.cols];
        for j in 0..self.p {
            let mut acc = 0.0;
            for r in 0..self.rows {
                acc += lambda[r] * self.row_beta[(r, j)];
            }
            reduced[j] = acc; // c_j = 0, column is −β
        }
        for m in 0..self.n_states {
            let mut acc = 0.0;
            for r in self.state_start[m]..self.state_start[m + 1] {
                acc += lambda[r];
            }
            reduced[self.p + m] = self.c0[self.p + m] - acc;
        }
        for s in 0..self.rows {
            reduced[self.p + self.n_states + s] = lambda[s];
        }
        reduced
    }

    /// Reduced cost of column `j` under the tie-break objective "minimize
    /// x_i" (zero except when x_i is basic, where the pricing vector is one
    /// row of B⁻¹).
    fn tiebreak_reduced_cost(&self, i: usize, j: usize, col_buf: &mut DVector<f64>) -> f64 {
        let direct = if j == i { 1.0 } else { 0.0 };
        match self.basic_pos[i] {
            None => direct,
            Some(k) => {
                self.column_into(j, col_buf);
                let mut acc = 0.0;
                for r in 0..self.rows {
                    acc += self.binv[(k, r)] * col_buf[r];
                }
                direct - acc
            }
        }
    }

    /// Sign of the lexicographic reduced-cost vector of column `j`:
    /// primary objective first, then x₁, …, x_p.
    fn lex_sign(&self, j: usize, primary: f64, col_buf: &mut DVector<f64>) -> i32 {
        if primary < -PRICE_TOL {
            return -1;
        }
        if primary > PRICE_TOL {
            return 1;
        }
        for i in 0..self.p {
            let ri = self.tiebreak_reduced_cost(i, j, col_buf);
            if ri < -PRICE_TOL {
                return -1;
            }
            if ri > PRICE_TOL {
                return 1;
            }
        }
        0
    }

    fn solve(mut self) -> Result<LpSolution> {
        let mut d = DVector::zeros(self.rows);
        let mut col = DVector::zeros(self.rows);
        let mut iterations = 0;

        loop {
            if iterations >= MAX_ITERATIONS {
                return Err(Error::SolverNonConvergence(format!(
                    "simplex exceeded {MAX_ITERATIONS} iterations on {} rows",
                    self.rows
                )));
            }

            let reduced = self.primary_reduced_costs();
            // Bland: lowest-index eligible column under the lex ordering.
            let mut entering = None;
            for j in 0..self.cols {
                if self.basic_pos[j].is_some() || self.lo[j] == self.up[j] {
                    continue;
                }
                let sign = self.lex_sign(j, reduced[j], &mut col);
                let eligible =
                    (!self.at_upper[j] && sign == -1) || (self.at_upper[j] && sign == 1);
                if eligible {
                    entering = Some(j);
                    break;
                }
            }
            let Some(e) = entering else {
                return Ok(self.extract(iterations));
            };
            iterations += 1;

            let dir: f64 = if self.at_upper[e] { -1.0 } else { 1.0 };
            self.column_into(e, &mut col);
            d.gemv(1.0, &self.binv, &col, 0.0);

            // Ratio test: how far the entering variable can move before a
            // basic variable (or its own opposite bound) blocks.
            let own_range = self.up[e] - self.lo[e];
            let mut min_ratio = own_range;
            for k in 0..self.rows {
                let coef = dir * d[k];
                if coef > PIVOT_TOL {
                    let lim = ((self.xb[k] - self.lo[self.basis[k]]) / coef).max(0.0);
                    if lim < min_ratio {
                        min_ratio = lim;
                    }
                } else if coef < -PIVOT_TOL {
                    let bound = self.up[self.basis[k]];
                    if bound.is_finite() {
                        let lim = ((bound - self.xb[k]) / -coef).max(0.0);
                        if lim < min_ratio {
                            min_ratio = lim;
                        }
                    }
                }
            }
            if !min_ratio.is_finite() {
                return Err(Error::Numerical(
                    "unbounded simplex direction in a bounded problem".into(),
                ));
            }
            // Leaving row: Bland again — smallest variable index among the
            // blocking rows.
            let mut leave: Option<usize> = None;
            for k in 0..self.rows {
                let coef = dir * d[k];
                let blocking = if coef > PIVOT_TOL {
                    (self.xb[k] - self.lo[self.basis[k]]) / coef <= min_ratio + PIVOT_TOL
                } else if coef < -PIVOT_TOL {
                    let bound = self.up[self.basis[k]];
                    bound.is_finite() && (bound - self.xb[k]) / -coef <= min_ratio + PIVOT_TOL
                } else {
                    false
                };
                if blocking && leave.map(|l| self.basis[k] < self.basis[l]).unwrap_or(true) {
                    leave = Some(k);
                }
            }

            if leave.is_none() || own_range <= min_ratio + PIVOT_TOL {
                // The entering variable's own bound blocks first: flip it.
                for k in 0..self.rows {
                    self.xb[k] -= dir * own_range * d[k];
                }
                self.at_upper[e] = !self.at_upper[e];
                continue;
            }
            let k_leave = leave.unwrap();

            let enter_val = self.nonbasic_value(e) + dir * min_ratio;
            for k in 0..self.rows {
                self.xb[k] -= dir * min_ratio * d[k];
            }
            let leaving_var = self.basis[k_leave];
            // The leaving variable parks at whichever bound blocked it.
            self.at_upper[leaving_var] = dir * d[k_leave] < 0.0;
            self.basic_pos[leaving_var] = None;
            self.basis[k_leave] = e;
            self.basic_pos[e] = Some(k_leave);
            self.xb[k_leave] = enter_val;

            // Product-form update of B⁻¹ with pivot column d.
            let pivot = d[k_leave];
            for r in 0..self.rows {
                self.binv[(k_leave, r)] /= pivot;
            }
            for k in 0..self.rows {
                if k == k_leave {
                    continue;
                }
                let factor = d[k];
                if factor != 0.0 {
                    for r in 0..self.rows {
                        self.binv[(k, r)] -= factor * self.binv[(k_leave, r)];
                    }
                }
            }
            self.pivots_since_refactor += 1;
            if self.pivots_since_refactor >= REFACTOR_EVERY {
                self.refactor()?;
            }
        }
    }

    fn extract(&self, iterations: usize) -> LpSolution {
        let mut x_star = vec![0.0; self.p];
        for j in 0..self.p {
            let v = match self.basic_pos[j] {
                Some(k) => self.xb[k],
                None => self.nonbasic_value(j),
            };
            x_star[j] = v.clamp(self.lower[j], self.upper[j]);
        }
        let mut value = 0.0;
        for m in 0..self.n_states {
            let j = self.p + m;
            let t = match self.basic_pos[j] {
                Some(k) => self.xb[k],
                None => self.nonbasic_value(j),
            };
            value += self.c0[j] * t;
        }
        LpSolution { x_star, value, iterations }
    }
}
