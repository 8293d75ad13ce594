//! Independent reference implementations ("oracles") and shared fixtures
//! for the integration tests.
//!
//! The oracles deliberately share no code with the library: matrices are
//! plain `Vec<Vec<f64>>`, inverses are explicit Gauss-Jordan eliminations,
//! and surrogate evaluation is written out longhand. Slow and simple beats
//! fast and entangled here — these exist to catch bugs in the optimized
//! paths.

#![allow(dead_code)] // each integration test binary uses a subset

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

// ---------------------------------------------------------------------------
// Dense linear algebra on Vec<Vec<f64>>, written from scratch.

pub fn mat_vec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter().map(|row| row.iter().zip(x).map(|(r, v)| r * v).sum()).collect()
}

pub fn mat_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for l in 0..k {
            let ail = a[i][l];
            for j in 0..m {
                out[i][j] += ail * b[l][j];
            }
        }
    }
    out
}

pub fn transpose(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (n, m) = (a.len(), a[0].len());
    (0..m).map(|j| (0..n).map(|i| a[i][j]).collect()).collect()
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Gauss-Jordan inverse with partial pivoting. Panics on a singular input —
/// oracle inputs are constructed to be well conditioned.
pub fn gauss_jordan_inverse(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = a.len();
    let mut aug: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..d).map(|j| if j == i { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..d {
        let pivot_row = (col..d)
            .max_by(|&r, &s| aug[r][col].abs().total_cmp(&aug[s][col].abs()))
            .expect("non-empty column range");
        assert!(aug[pivot_row][col].abs() > 1e-12, "singular matrix in oracle");
        aug.swap(col, pivot_row);
        let pivot = aug[col][col];
        for v in &mut aug[col] {
            *v /= pivot;
        }
        for row in 0..d {
            if row != col {
                let factor = aug[row][col];
                if factor != 0.0 {
                    for j in 0..2 * d {
                        let upd = factor * aug[col][j];
                        aug[row][j] -= upd;
                    }
                }
            }
        }
    }
    aug.into_iter().map(|row| row[d..].to_vec()).collect()
}

// ---------------------------------------------------------------------------
// Oracle 1: normal-inverse-gamma posterior by the naive textbook route.

/// Posterior hyperparameters as plain arrays.
#[derive(Debug, Clone)]
pub struct NaivePosterior {
    pub mu: Vec<f64>,
    pub v: Vec<Vec<f64>>,
    pub a: f64,
    pub b: f64,
}

/// Conjugate update computed with explicit inverses:
///
///   V* = (V⁻¹ + XᵀX)⁻¹,   μ* = V*(V⁻¹μ + Xᵀy),
///   a* = a + m/2,          b* = b + ½(μᵀV⁻¹μ + yᵀy − μ*ᵀ(V⁻¹μ + Xᵀy)).
///
/// `xs` holds the full design rows (intercept column included).
pub fn naive_nig_posterior(
    mu0: &[f64],
    v0: &[Vec<f64>],
    a0: f64,
    b0: f64,
    xs: &[Vec<f64>],
    ys: &[f64],
) -> NaivePosterior {
    let d = mu0.len();
    let m = xs.len();
    let v0_inv = gauss_jordan_inverse(v0);

    // V⁻¹ + XᵀX and r = V⁻¹μ + Xᵀy.
    let mut precision = v0_inv.clone();
    let mut r = mat_vec(&v0_inv, mu0);
    for (row, &yi) in xs.iter().zip(ys) {
        for i in 0..d {
            for j in 0..d {
                precision[i][j] += row[i] * row[j];
            }
            r[i] += row[i] * yi;
        }
    }

    let v_star = gauss_jordan_inverse(&precision);
    let mu_star = mat_vec(&v_star, &r);
    let a_star = a0 + m as f64 / 2.0;
    let b_star = b0 + 0.5 * (dot(mu0, &mat_vec(&v0_inv, mu0)) + dot(ys, ys) - dot(&mu_star, &r));
    NaivePosterior { mu: mu_star, v: v_star, a: a_star, b: b_star }
}

// ---------------------------------------------------------------------------
// Oracle 2: exact single-plane posterior moments.

#[derive(Debug, Clone)]
pub struct K1Moments {
    pub theta_mean: Vec<f64>,
    pub theta_cov: Vec<Vec<f64>>,
    pub sigma2_mean: f64,
    pub sigma2_var: f64,
}

/// Closed-form posterior moments for one hyperplane fitted to all of the
/// data: E[θ] = μ*, Cov[θ] = (b*/(a*−1))·V*, E[σ²] = b*/(a*−1), and
/// Var[σ²] = b*²/((a*−1)²(a*−2)). Panics unless a* > 2 so every moment
/// exists.
pub fn exact_k1_moments(
    mu0: &[f64],
    v0: &[Vec<f64>],
    a0: f64,
    b0: f64,
    xs: &[Vec<f64>],
    ys: &[f64],
) -> K1Moments {
    let post = naive_nig_posterior(mu0, v0, a0, b0, xs, ys);
    assert!(post.a > 2.0, "need a* > 2 for finite variances, got {}", post.a);
    let sigma2_mean = post.b / (post.a - 1.0);
    let d = post.mu.len();
    let theta_cov: Vec<Vec<f64>> =
        (0..d).map(|i| (0..d).map(|j| sigma2_mean * post.v[i][j]).collect()).collect();
    K1Moments {
        theta_mean: post.mu,
        theta_cov,
        sigma2_mean,
        sigma2_var: post.b * post.b / ((post.a - 1.0) * (post.a - 1.0) * (post.a - 2.0)),
    }
}

// ---------------------------------------------------------------------------
// Oracle 3: surrogate minimization by brute-force grid search.

/// One surrogate draw: a list of `(intercept, slope)` hyperplanes whose max
/// is the draw's value. The surrogate objective is the mean over draws.
pub type OraclePlanes = Vec<(f64, Vec<f64>)>;

pub fn oracle_surrogate_value(draws: &[OraclePlanes], x: &[f64]) -> f64 {
    let mut total = 0.0;
    for planes in draws {
        let mut best = f64::NEG_INFINITY;
        for (alpha, beta) in planes {
            let v = alpha + dot(beta, x);
            if v > best {
                best = v;
            }
        }
        total += best;
    }
    total / draws.len() as f64
}

/// Exhaustive minimization of the surrogate mean over a uniform grid with
/// `resolution` points per axis (endpoints included). Returns the best grid
/// point and its value; ties keep the first point visited.
pub fn grid_minimize(
    draws: &[OraclePlanes],
    lower: &[f64],
    upper: &[f64],
    resolution: usize,
) -> (Vec<f64>, f64) {
    assert!(resolution >= 2);
    let p = lower.len();
    let total: usize = resolution.pow(p as u32);
    let mut best_x = vec![0.0; p];
    let mut best_v = f64::INFINITY;
    let mut x = vec![0.0; p];
    for flat in 0..total {
        let mut rest = flat;
        for j in 0..p {
            let idx = rest % resolution;
            rest /= resolution;
            x[j] = lower[j] + (upper[j] - lower[j]) * idx as f64 / (resolution - 1) as f64;
        }
        let v = oracle_surrogate_value(draws, &x);
        if v < best_v {
            best_v = v;
            best_x.copy_from_slice(&x);
        }
    }
    (best_x, best_v)
}

// ---------------------------------------------------------------------------
// Shared fixtures.

/// A random max-affine draw of the shape fitted models produce: `k` planes
/// tangent to a random convex bowl `c·‖x − x₀‖²` at free random points.
/// Minima can sit in shallow valleys, so use this for value-level checks
/// only.
pub fn random_bowl_state<R: Rng>(rng: &mut R, p: usize) -> mbcr::core::ModelState {
    use nalgebra::DVector;
    let center: Vec<f64> = (0..p).map(|_| rng.random_range(-0.5..0.5)).collect();
    let curvature = rng.random_range(0.8..2.0);
    let k = rng.random_range(3..=6);
    let planes = (0..k)
        .map(|_| {
            let t: Vec<f64> = (0..p).map(|_| rng.random_range(-1.2..1.2)).collect();
            let value: f64 =
                curvature * t.iter().zip(&center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            let beta =
                DVector::from_fn(p, |j, _| 2.0 * curvature * (t[j] - center[j]));
            let alpha = value - beta.iter().zip(&t).map(|(g, v)| g * v).sum::<f64>();
            mbcr::core::Hyperplane::new(alpha, beta, 1.0).unwrap()
        })
        .collect();
    mbcr::core::ModelState::new(planes).unwrap()
}

/// A max-affine draw with a *sharp, isotropic* minimum exactly at `center`:
/// planes tangent to a random bowl at equal radius in evenly spread
/// directions. All tangent planes are active at the center and their
/// gradients surround zero, so the minimum is a cone vertex whose slope is
/// within cos(π/k) of isotropic — the geometry under which a grid search
/// must land within one cell of the true minimizer. States sharing a center
/// keep that property under averaging.
pub fn random_cone_state<R: Rng>(rng: &mut R, center: &[f64]) -> mbcr::core::ModelState {
    use nalgebra::DVector;
    let p = center.len();
    let curvature = rng.random_range(0.8..2.0);
    let radius = rng.random_range(0.25..0.6);
    let directions: Vec<Vec<f64>> = match p {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => {
            let k = rng.random_range(4..=7usize);
            let rotation = rng.random_range(0.0..std::f64::consts::TAU);
            (0..k)
                .map(|i| {
                    let angle = rotation + std::f64::consts::TAU * i as f64 / k as f64;
                    vec![angle.cos(), angle.sin()]
                })
                .collect()
        }
        _ => panic!("cone states are defined for p in {{1, 2}}"),
    };
    let planes = directions
        .iter()
        .map(|u| {
            let t: Vec<f64> = center.iter().zip(u).map(|(c, d)| c + radius * d).collect();
            let value = curvature * radius * radius;
            let beta = DVector::from_fn(p, |j, _| 2.0 * curvature * (t[j] - center[j]));
            let alpha = value - beta.iter().zip(&t).map(|(g, v)| g * v).sum::<f64>();
            mbcr::core::Hyperplane::new(alpha, beta, 1.0).unwrap()
        })
        .collect();
    mbcr::core::ModelState::new(planes).unwrap()
}

/// Converts fitted states into the oracle's plain-array surrogate form.
pub fn as_oracle_draws(states: &[mbcr::core::ModelState]) -> Vec<OraclePlanes> {
    states
        .iter()
        .map(|s| {
            s.planes()
                .iter()
                .map(|pl| (pl.alpha, pl.beta.iter().copied().collect()))
                .collect()
        })
        .collect()
}

/// The frozen least-squares reference instances: 20 one-dimensional
/// datasets of 20 points, `y = a·x² + b·x + c + sd·ε` with instance-specific
/// coefficients. Everything derives from one ChaCha8 stream per instance,
/// so the Rust tests and the committed CSVs always agree.
pub const LSE_INSTANCE_COUNT: usize = 20;
pub const LSE_INSTANCE_N: usize = 20;

pub fn lse_instance(index: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(index < LSE_INSTANCE_COUNT);
    let mut rng = ChaCha8Rng::seed_from_u64(9_000 + index as u64);
    let a = rng.random_range(0.5..2.0);
    let b = rng.random_range(-1.0..1.0);
    let c = rng.random_range(-0.5..0.5);
    let sd = rng.random_range(0.1..0.8);
    let mut xs = Vec::with_capacity(LSE_INSTANCE_N);
    let mut ys = Vec::with_capacity(LSE_INSTANCE_N);
    for _ in 0..LSE_INSTANCE_N {
        let x = rng.random_range(-2.0..2.0);
        let eps: f64 = rng.sample(StandardNormal);
        xs.push(x);
        ys.push(a * x * x + b * x + c + sd * eps);
    }
    (xs, ys)
}

/// Reads the committed reference objectives (one per instance) produced by
/// `scripts/qp_reference.py`.
pub fn lse_reference_objectives() -> Vec<f64> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/lse_reference.csv");
    let text = std::fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("missing frozen reference {path}: {e}"));
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            assert_eq!(line.trim(), "instance,objective", "unexpected reference header");
            continue;
        }
        let (idx, obj) = line.split_once(',').expect("two reference columns");
        assert_eq!(idx.parse::<usize>().unwrap(), i - 1, "reference rows must be in order");
        out.push(obj.trim().parse::<f64>().expect("numeric objective"));
    }
    assert_eq!(out.len(), LSE_INSTANCE_COUNT, "reference must cover all instances");
    out
}
