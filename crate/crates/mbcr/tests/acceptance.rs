//! The release gate. Every guarantee the crate makes is checked here at its
//! stated tolerance, and each test prints one `criterion N: PASS/FAIL` line
//! with the measured numbers so a failed gate is diagnosable from the log
//! alone (run with `--nocapture` to see the lines for passing tests too).
//!
//! The oracles live in `support` and share no code with the modules they
//! check: conjugate updates are compared against a naive explicit-inverse
//! implementation, chain moments against closed-form single-plane formulas,
//! the surrogate LP against brute-force grid search, and the least-squares
//! QP against objectives frozen from an independent solver
//! (`tests/data/lse_reference.csv`, regenerated via `scripts/qp_reference.py`).

mod support;

use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use mbcr::bench::{
    evaluate_mse, generate, lse_minimizer, mbcr_minimizer, stability_experiment, ProblemId,
    ProblemSpec,
};
use mbcr::conjugate::{nig_posterior, NigParams};
use mbcr::core::{Dataset, DirectionMode, Hyperplane, ModelState, PriorConfig, ProposalConfig};
use mbcr::predict::{convexity_certificate, posterior_mean};
use mbcr::proposals::{state_with_plane_last, MoveDetail, Proposer};
use mbcr::sampler::{
    fixed_k_validation_chain, run_chain, ChainConfig, ChainDiagnostics, PosteriorSamples,
};
use mbcr::solvers::{lse_fit, lse_predict, max_constraint_violation, minimize_surrogate};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Test-set size and seed shared by every predictive comparison, so methods
/// are always scored on the same points.
const TEST_N: usize = 10_000;
const TEST_SEED: u64 = 741_953;

fn verdict(criterion: usize, ok: bool, details: &str) {
    println!("criterion {criterion}: {} ({details})", if ok { "PASS" } else { "FAIL" });
}

// ---------------------------------------------------------------------------
// Criterion 1: conjugate updates match a naive explicit-inverse oracle.

#[test]
fn acceptance_01_conjugate_updates_match_the_naive_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(8_001);
    let start = Instant::now();
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let p = rng.random_range(1..=6usize);
        let d = p + 1;
        let m = rng.random_range(0..=50usize);

        // Random SPD prior covariance with a bounded condition number.
        let a_mat: Vec<Vec<f64>> =
            (0..d).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let mut v0 = vec![vec![0.0; d]; d];
        for i in 0..d {
            for j in 0..d {
                v0[i][j] = (0..d).map(|k| a_mat[k][i] * a_mat[k][j]).sum::<f64>()
                    + if i == j { 0.5 } else { 0.0 };
            }
        }
        let mu0: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let a0 = rng.random_range(1.5..5.0);
        let b0 = rng.random_range(0.5..3.0);

        let n = 50;
        let xs: Vec<f64> = (0..n * p).map(|_| rng.random_range(-3.0..3.0)).collect();
        let ys: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let data = Dataset::new(
            DMatrix::from_row_slice(n, p, &xs),
            DVector::from_vec(ys.clone()),
        )
        .unwrap();
        let rows: Vec<usize> = (0..m).collect();

        let prior = NigParams::new(
            DVector::from_vec(mu0.clone()),
            DMatrix::from_fn(d, d, |i, j| v0[i][j]),
            a0,
            b0,
        )
        .unwrap();
        let post = nig_posterior(&prior, &data, &rows).unwrap();

        // Oracle input: full design rows [1, x] for the selected subset.
        let design: Vec<Vec<f64>> = rows
            .iter()
            .map(|&i| {
                let mut z = vec![1.0];
                z.extend((0..p).map(|j| data.x()[(i, j)]));
                z
            })
            .collect();
        let sub_y: Vec<f64> = rows.iter().map(|&i| ys[i]).collect();
        let oracle = support::naive_nig_posterior(&mu0, &v0, a0, b0, &design, &sub_y);

        let mut check = |got: f64, want: f64| {
            let err = (got - want).abs() / (1.0 + want.abs());
            worst = worst.max(err);
        };
        for i in 0..d {
            check(post.mu()[i], oracle.mu[i]);
            for j in 0..d {
                check(post.v()[(i, j)], oracle.v[i][j]);
            }
        }
        check(post.a(), oracle.a);
        check(post.b(), oracle.b);
    }
    let elapsed = start.elapsed();
    let ok = worst <= 1e-8 && elapsed < Duration::from_secs(1);
    verdict(1, ok, &format!("100 instances, worst relative error {worst:.2e}, {elapsed:.2?}"));
    assert!(ok, "worst {worst:.2e} (limit 1e-8), elapsed {elapsed:.2?} (limit 1s)");
}

// ---------------------------------------------------------------------------
// Criterion 2: a pinned single-plane chain reproduces the closed-form
// posterior moments. With the proposal hyperparameters equal to the prior's
// the chain is an independence sampler drawing exactly from the conjugate
// posterior, so naive Monte Carlo standard errors apply.

struct PinnedRun {
    samples: PosteriorSamples,
    diagnostics: ChainDiagnostics,
    xs: Vec<f64>,
    ys: Vec<f64>,
    elapsed: Duration,
}

fn pinned_run() -> &'static PinnedRun {
    static RUN: OnceLock<PinnedRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(424_242);
        let n = 50;
        let xs: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|&x| {
                let noise: f64 = rng.sample(rand_distr::StandardNormal);
                1.2 * x - 0.5 + 0.3 * noise
            })
            .collect();
        let data = Dataset::new(
            DMatrix::from_column_slice(n, 1, &xs),
            DVector::from_vec(ys.clone()),
        )
        .unwrap();

        let prior = PriorConfig::default_for_dim(1);
        // Proposal == prior makes relocation an exact independence sampler.
        let proposal =
            ProposalConfig::new(prior.nig.clone(), 5, DirectionMode::Cardinal, 0.4).unwrap();
        let chain = ChainConfig::new(2_500, 500, 1, 31).unwrap();
        let start = Instant::now();
        let (samples, diagnostics) =
            fixed_k_validation_chain(&data, &prior, &proposal, &chain).unwrap();
        let elapsed = start.elapsed();
        PinnedRun { samples, diagnostics, xs, ys, elapsed }
    })
}

#[test]
fn acceptance_02_pinned_chain_matches_exact_posterior_moments() {
    let run = pinned_run();
    let draws = run.samples.draws();
    let m = draws.len();
    assert_eq!(m, 2_000);
    assert!(draws.iter().all(|s| s.k() == 1), "the validation chain must stay at one plane");

    let mut mean_alpha = 0.0;
    let mut mean_beta = 0.0;
    let mut mean_sigma2 = 0.0;
    for state in draws {
        let plane = &state.planes()[0];
        mean_alpha += plane.alpha;
        mean_beta += plane.beta[0];
        mean_sigma2 += plane.sigma2;
    }
    mean_alpha /= m as f64;
    mean_beta /= m as f64;
    mean_sigma2 /= m as f64;

    let design: Vec<Vec<f64>> = run.xs.iter().map(|&x| vec![1.0, x]).collect();
    let prior = PriorConfig::default_for_dim(1);
    let d = prior.nig.dim();
    let mu0: Vec<f64> = (0..d).map(|i| prior.nig.mu()[i]).collect();
    let v0: Vec<Vec<f64>> =
        (0..d).map(|i| (0..d).map(|j| prior.nig.v()[(i, j)]).collect()).collect();
    let exact =
        support::exact_k1_moments(&mu0, &v0, prior.nig.a(), prior.nig.b(), &design, &run.ys);

    let se = |var: f64| (var / m as f64).sqrt();
    let err_alpha = (mean_alpha - exact.theta_mean[0]).abs();
    let err_beta = (mean_beta - exact.theta_mean[1]).abs();
    let err_sigma2 = (mean_sigma2 - exact.sigma2_mean).abs();
    let lim_alpha = 3.0 * se(exact.theta_cov[0][0]);
    let lim_beta = 3.0 * se(exact.theta_cov[1][1]);
    let lim_sigma2 = 3.0 * se(exact.sigma2_var);

    let rate = run.diagnostics.acceptance_rate(mbcr::proposals::MoveKind::Relocate).unwrap();
    let ok = err_alpha <= lim_alpha
        && err_beta <= lim_beta
        && err_sigma2 <= lim_sigma2
        && rate >= 0.999
        && run.elapsed < Duration::from_secs(10);
    verdict(
        2,
        ok,
        &format!(
            "2000 draws: |Δα| {err_alpha:.1e} ≤ {lim_alpha:.1e}, |Δβ| {err_beta:.1e} ≤ \
             {lim_beta:.1e}, |Δσ²| {err_sigma2:.1e} ≤ {lim_sigma2:.1e}, acceptance {rate:.4}, \
             {:.2?}",
            run.elapsed
        ),
    );
    assert!(ok, "moment error beyond 3 standard errors, or slow chain ({:.2?})", run.elapsed);
}

// ---------------------------------------------------------------------------
// Criterion 3: the sampled proposal densities are exactly the densities the
// standalone kernels report, forward and reverse, for every move kind. This
// is the computational content of detailed balance for the jump kernel: the
// acceptance ratio uses correctly paired q(·|·) values.

#[test]
fn acceptance_03_proposal_densities_are_consistent_forward_and_reverse() {
    let data = generate(&ProblemSpec { id: ProblemId::Quad, n: 60, seed: 5 }).unwrap();
    let prior = PriorConfig::default_for_dim(2);
    let mut rng = ChaCha8Rng::seed_from_u64(90_210);

    let random_state = |rng: &mut ChaCha8Rng| {
        let planes: Vec<Hyperplane> = (0..3)
            .map(|_| {
                Hyperplane::new(
                    rng.random_range(-1.0..1.0),
                    DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0)),
                    rng.random_range(0.2..1.5),
                )
                .unwrap()
            })
            .collect();
        ModelState::new(planes).unwrap()
    };

    let mut worst = 0.0f64;
    let mut pairs = [0usize; 3];
    for directions in [DirectionMode::Cardinal, DirectionMode::Gaussian { count: 3 }] {
        let cfg = ProposalConfig::new(
            ProposalConfig::from_prior(&prior, 5, 0.4).nig,
            5,
            directions,
            0.4,
        )
        .unwrap();
        let proposer = Proposer::new(&data, &prior, &cfg).unwrap();
        let gap = |got: f64, want: f64, worst: &mut f64| {
            assert!(got.is_finite() && want.is_finite(), "unexpected infinite density");
            *worst = worst.max((got - want).abs());
        };

        for _ in 0..50 {
            let state = random_state(&mut rng);
            let draw = proposer.propose_relocation(&state, &mut rng).unwrap();
            gap(
                draw.log_forward,
                proposer.relocation_log_density(&state, &draw.candidate).unwrap(),
                &mut worst,
            );
            gap(
                draw.log_reverse,
                proposer.relocation_log_density(&draw.candidate, &state).unwrap(),
                &mut worst,
            );
            pairs[0] += 1;
        }

        let mut added = 0;
        for _ in 0..400 {
            if added == 50 {
                break;
            }
            let state = random_state(&mut rng);
            let Some(draw) = proposer.propose_addition(&state, &mut rng).unwrap() else {
                continue;
            };
            let MoveDetail::Add { spec, directions } = &draw.detail else {
                panic!("addition draw must carry its split");
            };
            gap(
                draw.log_forward,
                proposer
                    .addition_log_density(&state, directions, spec, &draw.candidate)
                    .unwrap(),
                &mut worst,
            );
            gap(
                draw.log_reverse,
                proposer
                    .deletion_log_density(&draw.candidate, draw.candidate.k() - 1, &state)
                    .unwrap(),
                &mut worst,
            );
            added += 1;
            pairs[1] += 1;
        }
        assert_eq!(added, 50, "addition proposals were almost always unavailable");

        for _ in 0..50 {
            let state = random_state(&mut rng);
            let draw = proposer.propose_deletion(&state, &mut rng).unwrap();
            let MoveDetail::Delete { removed, reverse_spec, reverse_directions } = &draw.detail
            else {
                panic!("deletion draw must carry its reverse move");
            };
            gap(
                draw.log_forward,
                proposer.deletion_log_density(&state, *removed, &draw.candidate).unwrap(),
                &mut worst,
            );
            match reverse_spec {
                Some(spec) => gap(
                    draw.log_reverse,
                    proposer
                        .addition_log_density(
                            &draw.candidate,
                            reverse_directions,
                            spec,
                            &state_with_plane_last(&state, *removed),
                        )
                        .unwrap(),
                    &mut worst,
                ),
                None => assert_eq!(draw.log_reverse, f64::NEG_INFINITY),
            }
            pairs[2] += 1;
        }
    }

    let ok = worst <= 1e-8 && pairs.iter().all(|&c| c == 100);
    verdict(
        3,
        ok,
        &format!(
            "{}/{}/{} relocate/add/delete pairs, worst log-density gap {worst:.2e}",
            pairs[0], pairs[1], pairs[2]
        ),
    );
    assert!(ok, "worst gap {worst:.2e} exceeds 1e-8");
}

// ---------------------------------------------------------------------------
// Shared benchmark fits for criteria 4–6: five seeds each of the two
// regression problems, fitted once and reused.

struct ProblemRun {
    id: ProblemId,
    samples: Vec<PosteriorSamples>,
    mbcr_mse: Vec<f64>,
    lse_mse: Vec<f64>,
    elapsed: Duration,
}

impl ProblemRun {
    fn mean(errors: &[f64]) -> f64 {
        errors.iter().sum::<f64>() / errors.len() as f64
    }
}

fn run_problem(id: ProblemId) -> ProblemRun {
    let start = Instant::now();
    let p = id.dim();
    let mut samples_all = Vec::new();
    let mut mbcr_mse = Vec::new();
    let mut lse_mse = Vec::new();
    for seed in 0..5 {
        let data = generate(&ProblemSpec { id, n: 200, seed }).unwrap();
        let prior = PriorConfig::default_for_dim(p);
        let proposal = ProposalConfig::from_prior(&prior, 5, 0.4);
        let chain = ChainConfig::new(1_000, 500, 1, seed).unwrap();
        let (samples, _) = run_chain(&data, &prior, &proposal, &chain).unwrap();
        mbcr_mse.push(evaluate_mse(
            |x| posterior_mean(&samples, x).unwrap(),
            id,
            TEST_N,
            TEST_SEED,
        ));
        samples_all.push(samples);

        let sol = lse_fit(&data, 1e-4).unwrap();
        lse_mse.push(evaluate_mse(|x| lse_predict(&sol, &data, x), id, TEST_N, TEST_SEED));
    }
    ProblemRun { id, samples: samples_all, mbcr_mse, lse_mse, elapsed: start.elapsed() }
}

fn p2_run() -> &'static ProblemRun {
    static RUN: OnceLock<ProblemRun> = OnceLock::new();
    RUN.get_or_init(|| run_problem(ProblemId::P2))
}

fn p3_run() -> &'static ProblemRun {
    static RUN: OnceLock<ProblemRun> = OnceLock::new();
    RUN.get_or_init(|| run_problem(ProblemId::P3))
}

/// Probe box covering the problem's design distribution.
fn design_box(id: ProblemId) -> (Vec<f64>, Vec<f64>) {
    let p = id.dim();
    let half = match id {
        ProblemId::P2 | ProblemId::Quad => 1.0,
        ProblemId::P3 => 4.0,
        ProblemId::P1 => 3.0,
    };
    (vec![-half; p], vec![half; p])
}

#[test]
fn acceptance_04_every_fitted_model_is_certifiably_convex() {
    let mut worst = f64::NEG_INFINITY;
    let mut models = 0;
    let mut probe_seed = 40_000;
    let mut probe = |samples: &PosteriorSamples, lower: &[f64], upper: &[f64]| {
        let mut rng = ChaCha8Rng::seed_from_u64(probe_seed);
        probe_seed += 1;
        let report = convexity_certificate(samples, lower, upper, 10_000, &mut rng).unwrap();
        worst = worst.max(report.max_violation);
        models += 1;
        assert!(
            report.holds(1e-9),
            "model {models} violates convexity by {:.2e}",
            report.max_violation
        );
    };

    for run in [p2_run(), p3_run()] {
        let (lower, upper) = design_box(run.id);
        for samples in &run.samples {
            probe(samples, &lower, &upper);
        }
    }
    probe(&pinned_run().samples, &[-2.0], &[2.0]);

    verdict(
        4,
        true,
        &format!("{models} models × 10000 probes, worst violation {worst:.2e} ≤ 1e-9"),
    );
}

fn regression_criterion(criterion: usize, run: &ProblemRun, limit: f64) {
    let mbcr = ProblemRun::mean(&run.mbcr_mse);
    let lse = ProblemRun::mean(&run.lse_mse);
    let ok = mbcr < limit && mbcr < lse && run.elapsed < Duration::from_secs(600);
    verdict(
        criterion,
        ok,
        &format!(
            "mean MSE over 5 seeds: {mbcr:.4} (limit {limit}) vs least-squares {lse:.4}, {:.1?}",
            run.elapsed
        ),
    );
    assert!(
        ok,
        "mean MSE {mbcr:.4} (limit {limit}), least-squares {lse:.4}, elapsed {:.1?}",
        run.elapsed
    );
}

#[test]
fn acceptance_05_sum_square_regression_beats_the_limit_and_baseline() {
    regression_criterion(5, p2_run(), 0.3);
}

#[test]
fn acceptance_06_absolute_value_regression_beats_the_limit_and_baseline() {
    regression_criterion(6, p3_run(), 0.4);
}

// ---------------------------------------------------------------------------
// Criterion 7: the least-squares fit agrees with the frozen independent
// reference and satisfies its own constraints.

#[test]
fn acceptance_07_least_squares_matches_the_frozen_reference() {
    let references = support::lse_reference_objectives();
    let mut worst_rel = 0.0f64;
    let mut worst_viol = 0.0f64;
    for (idx, reference) in references.iter().enumerate() {
        let (xs, ys) = support::lse_instance(idx);
        let data = Dataset::new(
            DMatrix::from_column_slice(xs.len(), 1, &xs),
            DVector::from_vec(ys),
        )
        .unwrap();
        let sol = lse_fit(&data, 1e-8).unwrap();
        worst_rel = worst_rel.max((sol.objective - reference).abs() / reference);
        worst_viol = worst_viol.max(max_constraint_violation(&sol, &data));
    }

    // Noise-free convex data must be fitted to numerical zero.
    let n = 20;
    let xs: Vec<f64> = (0..n).map(|i| -2.0 + 4.0 * i as f64 / (n - 1) as f64).collect();
    let ys: Vec<f64> = xs.iter().map(|&x| x * x).collect();
    let data =
        Dataset::new(DMatrix::from_column_slice(n, 1, &xs), DVector::from_vec(ys)).unwrap();
    let clean = lse_fit(&data, 1e-8).unwrap();

    let ok = worst_rel <= 1e-5 && worst_viol <= 1e-6 && clean.objective < 1e-8;
    verdict(
        7,
        ok,
        &format!(
            "20 instances: worst relative objective gap {worst_rel:.2e}, worst constraint \
             violation {worst_viol:.2e}, noise-free objective {:.2e}",
            clean.objective
        ),
    );
    assert!(ok, "rel {worst_rel:.2e}, viol {worst_viol:.2e}, clean {:.2e}", clean.objective);
}

// ---------------------------------------------------------------------------
// Criterion 8: surrogate minimization. (a) The LP lands within one grid cell
// of brute-force search on surrogates with an identifiable minimum — sets of
// tangent cones sharing a vertex. (b) On resampled quadratic data the
// posterior-mean pipeline relocates its minimizer less than the
// least-squares pipeline.

#[test]
fn acceptance_08_surrogate_minimization_is_grid_accurate_and_more_stable() {
    let mut rng = ChaCha8Rng::seed_from_u64(6_208);
    let mut worst_offset = 0.0f64;
    for case in 0..50 {
        let p = 1 + case % 2;
        let center: Vec<f64> = (0..p).map(|_| rng.random_range(-0.7..0.7)).collect();
        let count = rng.random_range(1..=3);
        let states: Vec<ModelState> =
            (0..count).map(|_| support::random_cone_state(&mut rng, &center)).collect();
        let lower = vec![-1.0; p];
        let upper = vec![1.0; p];

        let sol = minimize_surrogate(&states, &lower, &upper).unwrap();
        let (grid_x, grid_v) =
            support::grid_minimize(&support::as_oracle_draws(&states), &lower, &upper, 201);
        let cell = 2.0 / 200.0;
        for j in 0..p {
            let offset = (sol.x_star[j] - grid_x[j]).abs();
            worst_offset = worst_offset.max(offset);
            assert!(
                offset <= cell + 1e-9,
                "case {case}, axis {j}: LP at {:.6} vs grid at {:.6}",
                sol.x_star[j],
                grid_x[j]
            );
        }
        assert!(sol.value <= grid_v + 1e-9, "LP value must not exceed the grid optimum");
    }

    let start = Instant::now();
    let lower = [-1.0, -1.0];
    let upper = [1.0, 1.0];
    let bayes = |data: &Dataset, seed: u64| mbcr_minimizer(data, seed, &lower, &upper);
    let baseline = |data: &Dataset, _seed: u64| lse_minimizer(data, &lower, &upper);
    let results = stability_experiment(100, 10, 300, &[&bayes, &baseline]).unwrap();
    let elapsed = start.elapsed();

    let ok = worst_offset <= 2.0 / 200.0 + 1e-9
        && results[0].mean_distance < results[1].mean_distance
        && elapsed < Duration::from_secs(300);
    verdict(
        8,
        ok,
        &format!(
            "50 LP cases within one grid cell (worst offset {worst_offset:.4}); minimizer drift \
             over 10 resamples: {:.4} vs least-squares {:.4}, {elapsed:.1?}",
            results[0].mean_distance, results[1].mean_distance
        ),
    );
    assert!(
        ok,
        "drift {:.4} vs {:.4}, elapsed {elapsed:.1?}",
        results[0].mean_distance, results[1].mean_distance
    );
}

// ---------------------------------------------------------------------------
// Criterion 9: fitting is bit-reproducible — same data, config, and seed
// give byte-identical model files.

#[test]
fn acceptance_09_fit_outputs_are_byte_identical_across_reruns() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("x1,y\n");
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..30 {
        let x: f64 = rng.random_range(-2.0..2.0);
        let noise: f64 = rng.sample(rand_distr::StandardNormal);
        csv.push_str(&format!("{x},{}\n", x * x + 0.3 * noise));
    }
    std::fs::write(dir.path().join("train.csv"), csv).unwrap();
    std::fs::write(
        dir.path().join("config.json"),
        r#"{"proposal": {"directions": {"gaussian": {"count": 3}}}, "chain": {"iterations": 400, "burn_in": 200}}"#,
    )
    .unwrap();

    let mut outputs = Vec::new();
    for (run, out) in [(1, "a.json"), (2, "b.json"), (3, "c.json"), (4, "d.json")] {
        // Runs 3 and 4 use random split directions; determinism must hold there too.
        let mut args =
            vec!["fit", "--data", "train.csv", "--seed", "19", "--out", out];
        if run > 2 {
            args.extend_from_slice(&["--config", "config.json"]);
        }
        let status = Command::new(env!("CARGO_BIN_EXE_mbcr"))
            .current_dir(dir.path())
            .args(&args)
            .status()
            .unwrap();
        assert!(status.success());
        outputs.push(std::fs::read(dir.path().join(out)).unwrap());
    }

    let ok = outputs[0] == outputs[1] && outputs[2] == outputs[3] && outputs[0] != outputs[2];
    verdict(
        9,
        ok,
        &format!(
            "two default runs identical ({} bytes), two randomized-direction runs identical \
             ({} bytes)",
            outputs[0].len(),
            outputs[2].len()
        ),
    );
    assert!(ok, "model files differ across identical reruns");
}
