//! Command-line front end: fit / predict / bench / minimize over CSV data
//! and JSON model files.
//!
//! Exit codes: 0 success, 1 input error (bad flags, malformed files,
//! dimension mismatches), 2 runtime error (chain or solver failure). All
//! messages go to standard error; outputs are written atomically (temp file
//! + rename) so a crashed run never leaves a half-written artifact.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bench::{evaluate_mse, generate, ProblemId, ProblemSpec};
use crate::conjugate::NigParams;
use crate::core::{Dataset, DirectionMode, Hyperplane, ModelState, PriorConfig, ProposalConfig};
use crate::error::{Error, Result};
use crate::predict::{posterior_band, posterior_mean};
use crate::sampler::{run_chain, ChainConfig, ChainDiagnostics, PosteriorSamples};
use crate::solvers::{lse_fit, lse_predict, minimize_surrogate};

/// Out-of-sample evaluation size for `bench` (fresh draws per MSE).
const BENCH_TEST_N: usize = 10_000;
/// Evaluation seed shared by every method in a `bench` run, so all methods
/// are scored on identical test points.
const BENCH_TEST_SEED: u64 = 741_953;
/// Convergence tolerance for least-squares fits inside `bench`.
const BENCH_LSE_TOLERANCE: f64 = 1e-4;
/// Draw cap handed to the surrogate LP by `minimize` (matches the bench
/// pipelines).
const MINIMIZE_DRAW_CAP: usize = 100;

#[derive(Parser)]
#[command(name = "mbcr", version, about = "Bayesian convex regression with max-affine models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the posterior to a CSV dataset and write a model file.
    Fit {
        /// Training data CSV with header x1,...,xp,y.
        #[arg(long)]
        data: PathBuf,
        /// JSON config; omitted sections fall back to stock settings.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Chain seed; overrides the config file's value.
        #[arg(long)]
        seed: Option<u64>,
        /// Output model JSON path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a fitted model's posterior mean and credible band.
    Predict {
        /// Model JSON written by `fit`.
        #[arg(long)]
        model: PathBuf,
        /// Query CSV with header x1,...,xp (a trailing y column is ignored).
        #[arg(long, conflicts_with = "grid")]
        queries: Option<PathBuf>,
        /// Axis-aligned grid, e.g. "x1=-1:1:21,x2=0:2:5"; the first axis
        /// varies slowest.
        #[arg(long)]
        grid: Option<String>,
        /// Central credible-band mass.
        #[arg(long, default_value_t = 0.9)]
        level: f64,
        /// Output CSV path (columns x1,...,xp,mean,lo,hi).
        #[arg(long)]
        out: PathBuf,
    },
    /// Benchmark methods on a synthetic problem and write an MSE table.
    Bench {
        /// One of p1, p2, p3, quad.
        #[arg(long)]
        problem: String,
        /// Training-set size per seed.
        #[arg(long)]
        n: usize,
        /// Number of instances; seeds run base, base+1, ….
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        /// First seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Comma-separated subset of {mbcr, lse}.
        #[arg(long, default_value = "mbcr,lse")]
        methods: String,
        /// Worker threads across instances.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Output CSV path (problem,method,n,seed,mse,se; one summary row
        /// per method).
        #[arg(long)]
        out: PathBuf,
    },
    /// Minimize a fitted model's surrogate over a box.
    Minimize {
        /// Model JSON written by `fit`.
        #[arg(long)]
        model: PathBuf,
        /// Per-dimension bounds "lo:hi,lo:hi,…".
        #[arg(long = "box", allow_hyphen_values = true)]
        bounds: String,
        /// Output JSON path ({"x_star": …, "value": …}).
        #[arg(long)]
        out: PathBuf,
    },
}

/// Parses arguments, runs the selected command, and returns the process
/// exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_input_error() {
                1
            } else {
                2
            }
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Fit { data, config, seed, out } => cmd_fit(&data, config.as_deref(), seed, &out),
        Command::Predict { model, queries, grid, level, out } => {
            cmd_predict(&model, queries.as_deref(), grid.as_deref(), level, &out)
        }
        Command::Bench { problem, n, seeds, seed, methods, jobs, out } => {
            cmd_bench(&problem, n, seeds, seed, &methods, jobs, &out)
        }
        Command::Minimize { model, bounds, out } => cmd_minimize(&model, &bounds, &out),
    }
}

// ---------------------------------------------------------------------------
// Serialized forms. Field names mirror the library structs one to one, and
// unknown fields are ignored everywhere so old readers accept newer files.

#[derive(Debug, Clone, Serialize, Deserialize)]
struct NigDto {
    mu: Vec<f64>,
    v: Vec<Vec<f64>>,
    a: f64,
    b: f64,
}

impl NigDto {
    fn from_params(p: &NigParams) -> Self {
        let d = p.dim();
        Self {
            mu: p.mu().iter().copied().collect(),
            v: (0..d).map(|r| (0..d).map(|c| p.v()[(r, c)]).collect()).collect(),
            a: p.a(),
            b: p.b(),
        }
    }

    fn into_params(self) -> Result<NigParams> {
        let d = self.mu.len();
        if self.v.len() != d || self.v.iter().any(|row| row.len() != d) {
            return Err(Error::InvalidConfig(format!(
                "nig.v must be a {d}×{d} matrix matching nig.mu"
            )));
        }
        let v = DMatrix::from_fn(d, d, |r, c| self.v[r][c]);
        NigParams::new(DVector::from_vec(self.mu), v, self.a, self.b)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum DirectionsDto {
    Cardinal,
    Gaussian { count: usize },
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
struct PriorDto {
    nig: Option<NigDto>,
    lambda: Option<f64>,
    truncation: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
struct ProposalDto {
    nig: Option<NigDto>,
    knots_per_region: Option<usize>,
    directions: Option<DirectionsDto>,
    jump_constant: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
struct ChainDto {
    iterations: Option<usize>,
    burn_in: Option<usize>,
    thin: Option<usize>,
    seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
struct ConfigDto {
    prior: PriorDto,
    proposal: ProposalDto,
    chain: ChainDto,
}

/// Fit settings after merging the config file (if any), the `--seed` flag,
/// and the data-derived defaults.
struct Resolved {
    prior: PriorConfig,
    proposal: ProposalConfig,
    chain: ChainConfig,
}

impl ConfigDto {
    fn resolve(self, p: usize, seed_flag: Option<u64>) -> Result<Resolved> {
        let stock = PriorConfig::default_for_dim(p);
        let prior_nig = match self.prior.nig {
            Some(dto) => dto.into_params()?,
            None => stock.nig.clone(),
        };
        let prior = PriorConfig::new(
            prior_nig,
            self.prior.lambda.unwrap_or(stock.lambda),
            self.prior.truncation,
        )?;
        if prior.dim() != p {
            return Err(Error::InvalidConfig(format!(
                "prior is for dimension {}, data has dimension {p}",
                prior.dim()
            )));
        }

        let stock_prop = ProposalConfig::from_prior(&prior, 5, 0.4);
        let proposal = ProposalConfig::new(
            match self.proposal.nig {
                Some(dto) => dto.into_params()?,
                None => stock_prop.nig.clone(),
            },
            self.proposal.knots_per_region.unwrap_or(stock_prop.knots_per_region),
            match self.proposal.directions {
                Some(DirectionsDto::Cardinal) | None => DirectionMode::Cardinal,
                Some(DirectionsDto::Gaussian { count }) => DirectionMode::Gaussian { count },
            },
            self.proposal.jump_constant.unwrap_or(stock_prop.jump_constant),
        )?;
        if proposal.nig.dim() != p + 1 {
            return Err(Error::InvalidConfig(format!(
                "proposal is for dimension {}, data has dimension {p}",
                proposal.nig.dim() - 1
            )));
        }

        let stock_chain = ChainConfig::default();
        let chain = ChainConfig::new(
            self.chain.iterations.unwrap_or(stock_chain.iterations),
            self.chain.burn_in.unwrap_or(stock_chain.burn_in),
            self.chain.thin.unwrap_or(stock_chain.thin),
            seed_flag.or(self.chain.seed).unwrap_or(stock_chain.seed),
        )?;
        Ok(Resolved { prior, proposal, chain })
    }
}

fn resolved_to_dto(r: &Resolved) -> ConfigDto {
    ConfigDto {
        prior: PriorDto {
            nig: Some(NigDto::from_params(&r.prior.nig)),
            lambda: Some(r.prior.lambda),
            truncation: r.prior.truncation,
        },
        proposal: ProposalDto {
            nig: Some(NigDto::from_params(&r.proposal.nig)),
            knots_per_region: Some(r.proposal.knots_per_region),
            directions: Some(match r.proposal.directions {
                DirectionMode::Cardinal => DirectionsDto::Cardinal,
                DirectionMode::Gaussian { count } => DirectionsDto::Gaussian { count },
            }),
            jump_constant: Some(r.proposal.jump_constant),
        },
        chain: ChainDto {
            iterations: Some(r.chain.iterations),
            burn_in: Some(r.chain.burn_in),
            thin: Some(r.chain.thin),
            seed: Some(r.chain.seed),
        },
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct PlaneDto {
    alpha: f64,
    beta: Vec<f64>,
    sigma2: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct DrawDto {
    k: usize,
    planes: Vec<PlaneDto>,
}

#[derive(Debug, Serialize, Deserialize)]
struct MoveStatsDto {
    attempts: usize,
    accepts: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct DiagnosticsDto {
    retained: usize,
    relocate: MoveStatsDto,
    delete: MoveStatsDto,
    add: MoveStatsDto,
    numerical_rejections: usize,
    mean_k: f64,
}

/// The model file: everything needed to reload the posterior and predict.
#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    dim: usize,
    draws: Vec<DrawDto>,
    diagnostics: DiagnosticsDto,
    config: ConfigDto,
}

impl ModelFile {
    fn build(samples: &PosteriorSamples, diag: &ChainDiagnostics, resolved: &Resolved) -> Self {
        let draws = samples
            .draws()
            .iter()
            .map(|state| DrawDto {
                k: state.k(),
                planes: state
                    .planes()
                    .iter()
                    .map(|pl| PlaneDto {
                        alpha: pl.alpha,
                        beta: pl.beta.iter().copied().collect(),
                        sigma2: pl.sigma2,
                    })
                    .collect(),
            })
            .collect::<Vec<_>>();
        let mean_k = if draws.is_empty() {
            0.0
        } else {
            draws.iter().map(|d| d.k as f64).sum::<f64>() / draws.len() as f64
        };
        ModelFile {
            dim: samples.dim(),
            draws,
            diagnostics: DiagnosticsDto {
                retained: samples.len(),
                relocate: MoveStatsDto {
                    attempts: diag.relocate.attempts,
                    accepts: diag.relocate.accepts,
                },
                delete: MoveStatsDto { attempts: diag.delete.attempts, accepts: diag.delete.accepts },
                add: MoveStatsDto { attempts: diag.add.attempts, accepts: diag.add.accepts },
                numerical_rejections: diag.numerical_rejections,
                mean_k,
            },
            config: resolved_to_dto(resolved),
        }
    }

    fn into_samples(self) -> Result<PosteriorSamples> {
        let resolved = self.config.resolve(self.dim, None)?;
        let mut states = Vec::with_capacity(self.draws.len());
        for draw in self.draws {
            if draw.planes.len() != draw.k {
                return Err(Error::InvalidInput(format!(
                    "model draw lists k = {} but {} planes",
                    draw.k,
                    draw.planes.len()
                )));
            }
            let planes = draw
                .planes
                .into_iter()
                .map(|pl| Hyperplane::new(pl.alpha, DVector::from_vec(pl.beta), pl.sigma2))
                .collect::<Result<Vec<_>>>()?;
            states.push(ModelState::new(planes)?);
        }
        PosteriorSamples::new(states, resolved.prior, resolved.proposal, resolved.chain)
    }
}

// ---------------------------------------------------------------------------
// File plumbing.

/// Writes via a sibling temp file and rename, so readers never observe a
/// partial file.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let io = |e: std::io::Error| Error::InvalidInput(format!("cannot write {}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.persist(path)
        .map_err(|e| Error::InvalidInput(format!("cannot write {}: {}", path.display(), e.error)))?;
    Ok(())
}

fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))
}

fn read_model(path: &Path) -> Result<PosteriorSamples> {
    let text = read_to_string(path)?;
    let file: ModelFile = serde_json::from_str(&text)
        .map_err(|e| Error::InvalidInput(format!("malformed model {}: {e}", path.display())))?;
    file.into_samples()
}

/// Reads a data CSV with header x1,...,xp,y.
fn read_data_csv(path: &Path) -> Result<Dataset> {
    let (header, rows) = read_numeric_csv(path)?;
    let p = header.len().saturating_sub(1);
    expect_x_columns(&header[..p], path)?;
    if header.last().map(String::as_str) != Some("y") {
        return Err(Error::InvalidInput(format!(
            "{}: last column must be named y, found {:?}",
            path.display(),
            header.last().map(String::as_str).unwrap_or("")
        )));
    }
    if p == 0 {
        return Err(Error::InvalidInput(format!(
            "{}: need at least one x column before y",
            path.display()
        )));
    }
    let n = rows.len();
    let mut x = DMatrix::zeros(n, p);
    let mut y = DVector::zeros(n);
    for (i, row) in rows.iter().enumerate() {
        for j in 0..p {
            x[(i, j)] = row[j];
        }
        y[i] = row[p];
    }
    Dataset::new(x, y)
}

/// Reads a query CSV with header x1,...,xp; a trailing y column is allowed
/// and ignored.
fn read_query_csv(path: &Path, p: usize) -> Result<Vec<Vec<f64>>> {
    let (header, rows) = read_numeric_csv(path)?;
    let has_y = header.last().map(String::as_str) == Some("y");
    let cols = header.len() - usize::from(has_y);
    if cols != p {
        return Err(Error::DimensionMismatch { expected: p, got: cols });
    }
    expect_x_columns(&header[..cols], path)?;
    Ok(rows.into_iter().map(|mut row| {
        row.truncate(p);
        row
    }).collect())
}

fn expect_x_columns(names: &[String], path: &Path) -> Result<()> {
    for (j, name) in names.iter().enumerate() {
        let want = format!("x{}", j + 1);
        if *name != want {
            return Err(Error::InvalidInput(format!(
                "{}: column {} must be named {want}, found {name:?}",
                path.display(),
                j + 1
            )));
        }
    }
    Ok(())
}

fn read_numeric_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let bad = |msg: String| Error::InvalidInput(format!("{}: {msg}", path.display()));
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
    let header: Vec<String> =
        reader.headers().map_err(|e| bad(e.to_string()))?.iter().map(str::to_owned).collect();
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        if record.len() != header.len() {
            return Err(bad(format!(
                "row {} has {} fields, header has {}",
                i + 2,
                record.len(),
                header.len()
            )));
        }
        let row = record
            .iter()
            .map(|field| {
                field.trim().parse::<f64>().map_err(|_| {
                    bad(format!("row {}: {field:?} is not a number", i + 2))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

// ---------------------------------------------------------------------------
// Flag grammars.

/// Parses "x1=lo:hi:count,x2=lo:hi:count,…" into per-axis linear grids.
/// Axes must appear in order x1..xp; the cartesian product is emitted with
/// the first axis varying slowest.
fn parse_grid(spec: &str, p: usize) -> Result<Vec<Vec<f64>>> {
    let bad = |msg: String| Error::InvalidInput(format!("grid {spec:?}: {msg}"));
    let parts: Vec<&str> = spec.split(',').collect();
    if parts.len() != p {
        return Err(bad(format!("{} axes given, model has dimension {p}", parts.len())));
    }
    let mut axes: Vec<Vec<f64>> = Vec::with_capacity(p);
    for (j, part) in parts.iter().enumerate() {
        let want = format!("x{}", j + 1);
        let rest = part
            .strip_prefix(&want)
            .and_then(|r| r.strip_prefix('='))
            .ok_or_else(|| bad(format!("axis {} must start with \"{want}=\"", j + 1)))?;
        let nums: Vec<&str> = rest.split(':').collect();
        let [lo, hi, count] = nums[..] else {
            return Err(bad(format!("{want} needs lo:hi:count, got {rest:?}")));
        };
        let lo: f64 = lo.parse().map_err(|_| bad(format!("{want}: bad lower bound {lo:?}")))?;
        let hi: f64 = hi.parse().map_err(|_| bad(format!("{want}: bad upper bound {hi:?}")))?;
        let count: usize =
            count.parse().map_err(|_| bad(format!("{want}: bad count {count:?}")))?;
        if count == 0 || !lo.is_finite() || !hi.is_finite() || lo > hi {
            return Err(bad(format!("{want}: need finite lo ≤ hi and count ≥ 1")));
        }
        let axis = if count == 1 {
            vec![lo]
        } else {
            (0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect()
        };
        axes.push(axis);
    }
    let total: usize = axes.iter().map(Vec::len).product();
    let mut points = Vec::with_capacity(total);
    let mut idx = vec![0usize; p];
    for _ in 0..total {
        points.push((0..p).map(|j| axes[j][idx[j]]).collect());
        for j in (0..p).rev() {
            idx[j] += 1;
            if idx[j] < axes[j].len() {
                break;
            }
            idx[j] = 0;
        }
    }
    Ok(points)
}

/// Parses "lo:hi,lo:hi,…" into box bounds.
fn parse_box(spec: &str, p: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let bad = |msg: String| Error::MalformedBox(format!("{spec:?}: {msg}"));
    let parts: Vec<&str> = spec.split(',').collect();
    if parts.len() != p {
        return Err(bad(format!("{} axes given, model has dimension {p}", parts.len())));
    }
    let mut lower = Vec::with_capacity(p);
    let mut upper = Vec::with_capacity(p);
    for (j, part) in parts.iter().enumerate() {
        let Some((lo, hi)) = part.split_once(':') else {
            return Err(bad(format!("axis {}: need lo:hi, got {part:?}", j + 1)));
        };
        let lo: f64 = lo.parse().map_err(|_| bad(format!("axis {}: bad bound {lo:?}", j + 1)))?;
        let hi: f64 = hi.parse().map_err(|_| bad(format!("axis {}: bad bound {hi:?}", j + 1)))?;
        if !lo.is_finite() || !hi.is_finite() || lo > hi {
            return Err(bad(format!("axis {}: need finite lo ≤ hi", j + 1)));
        }
        lower.push(lo);
        upper.push(hi);
    }
    Ok((lower, upper))
}

// ---------------------------------------------------------------------------
// Commands.

fn cmd_fit(data: &Path, config: Option<&Path>, seed: Option<u64>, out: &Path) -> Result<()> {
    let dataset = read_data_csv(data)?;
    let dto: ConfigDto = match config {
        Some(path) => serde_json::from_str(&read_to_string(path)?)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?,
        None => ConfigDto::default(),
    };
    let resolved = dto.resolve(dataset.dim(), seed)?;
    let (samples, diagnostics) =
        run_chain(&dataset, &resolved.prior, &resolved.proposal, &resolved.chain)?;
    let file = ModelFile::build(&samples, &diagnostics, &resolved);
    let json = serde_json::to_string_pretty(&file)
        .map_err(|e| Error::Numerical(format!("model serialization failed: {e}")))?;
    write_atomic(out, json.as_bytes())?;
    for (name, stats) in [
        ("relocate", &diagnostics.relocate),
        ("add", &diagnostics.add),
        ("delete", &diagnostics.delete),
    ] {
        match stats.rate() {
            Some(rate) => {
                println!("{name}: {}/{} accepted ({rate:.3})", stats.accepts, stats.attempts)
            }
            None => println!("{name}: no attempts"),
        }
    }
    println!("retained {} draws (mean k {:.2})", samples.len(), file.diagnostics.mean_k);
    Ok(())
}

fn cmd_predict(
    model: &Path,
    queries: Option<&Path>,
    grid: Option<&str>,
    level: f64,
    out: &Path,
) -> Result<()> {
    let samples = read_model(model)?;
    let p = samples.dim();
    let points = match (queries, grid) {
        (Some(path), None) => read_query_csv(path, p)?,
        (None, Some(spec)) => parse_grid(spec, p)?,
        (None, None) | (Some(_), Some(_)) => {
            return Err(Error::InvalidInput(
                "exactly one of --queries and --grid is required".into(),
            ))
        }
    };
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = (1..=p).map(|j| format!("x{j}")).collect();
    header.extend(["mean".into(), "lo".into(), "hi".into()]);
    let io = |e: csv::Error| Error::InvalidInput(format!("cannot encode output: {e}"));
    writer.write_record(&header).map_err(io)?;
    for x in &points {
        let mean = posterior_mean(&samples, x)?;
        let (lo, hi) = posterior_band(&samples, x, level)?;
        let mut record: Vec<String> = x.iter().map(f64::to_string).collect();
        record.extend([mean.to_string(), lo.to_string(), hi.to_string()]);
        writer.write_record(&record).map_err(io)?;
    }
    let bytes = writer.into_inner().expect("vec sink cannot fail");
    write_atomic(out, &bytes)?;
    println!("wrote {} predictions to {}", points.len(), out.display());
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Method {
    Mbcr,
    Lse,
    /// Scores the noiseless truth itself; kept out of the help text, used
    /// by tests to validate the harness end to end.
    Truth,
}

impl Method {
    fn parse_list(spec: &str) -> Result<Vec<Method>> {
        let mut methods = Vec::new();
        for name in spec.split(',') {
            let method = match name.trim() {
                "mbcr" => Method::Mbcr,
                "lse" => Method::Lse,
                "truth" => Method::Truth,
                other => {
                    return Err(Error::InvalidInput(format!(
                        "unknown method {other:?} (expected mbcr or lse)"
                    )))
                }
            };
            if !methods.contains(&method) {
                methods.push(method);
            }
        }
        if methods.is_empty() {
            return Err(Error::InvalidInput("no methods given".into()));
        }
        Ok(methods)
    }

    fn name(self) -> &'static str {
        match self {
            Method::Mbcr => "mbcr",
            Method::Lse => "lse",
            Method::Truth => "truth",
        }
    }

    fn run(self, id: ProblemId, n: usize, seed: u64) -> Result<f64> {
        let data = generate(&ProblemSpec { id, n, seed })?;
        let mse = match self {
            Method::Mbcr => {
                let prior = PriorConfig::default_for_dim(data.dim());
                let proposal = ProposalConfig::from_prior(&prior, 5, 0.4);
                let chain = ChainConfig { seed, ..ChainConfig::default() };
                let (samples, _) = run_chain(&data, &prior, &proposal, &chain)?;
                evaluate_mse(
                    |x| posterior_mean(&samples, x).expect("dimensions match by construction"),
                    id,
                    BENCH_TEST_N,
                    BENCH_TEST_SEED,
                )
            }
            Method::Lse => {
                let sol = lse_fit(&data, BENCH_LSE_TOLERANCE)?;
                evaluate_mse(|x| lse_predict(&sol, &data, x), id, BENCH_TEST_N, BENCH_TEST_SEED)
            }
            Method::Truth => evaluate_mse(|x| id.truth(x), id, BENCH_TEST_N, BENCH_TEST_SEED),
        };
        Ok(mse)
    }
}

fn parse_problem(name: &str) -> Result<ProblemId> {
    match name.to_ascii_lowercase().as_str() {
        "p1" => Ok(ProblemId::P1),
        "p2" => Ok(ProblemId::P2),
        "p3" => Ok(ProblemId::P3),
        "quad" => Ok(ProblemId::Quad),
        other => Err(Error::InvalidInput(format!(
            "unknown problem {other:?} (expected p1, p2, p3, or quad)"
        ))),
    }
}

fn cmd_bench(
    problem: &str,
    n: usize,
    seeds: u64,
    base_seed: u64,
    methods: &str,
    jobs: usize,
    out: &Path,
) -> Result<()> {
    let id = parse_problem(problem)?;
    let methods = Method::parse_list(methods)?;
    if seeds == 0 {
        return Err(Error::InvalidInput("need at least one seed".into()));
    }
    if jobs == 0 {
        return Err(Error::InvalidInput("jobs must be at least 1".into()));
    }

    // One task per (method, seed); workers pull tasks off a shared cursor.
    let tasks: Vec<(Method, u64)> = methods
        .iter()
        .flat_map(|&m| (0..seeds).map(move |s| (m, base_seed + s)))
        .collect();
    let mut outcomes: Vec<Option<Result<f64>>> = (0..tasks.len()).map(|_| None).collect();
    if jobs == 1 {
        for (slot, &(method, seed)) in outcomes.iter_mut().zip(&tasks) {
            *slot = Some(method.run(id, n, seed));
        }
    } else {
        let cursor = std::sync::atomic::AtomicUsize::new(0);
        let slots: Vec<std::sync::Mutex<Option<Result<f64>>>> =
            (0..tasks.len()).map(|_| std::sync::Mutex::new(None)).collect();
        std::thread::scope(|scope| {
            for _ in 0..jobs.min(tasks.len()) {
                scope.spawn(|| loop {
                    let t = cursor.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                    let Some(&(method, seed)) = tasks.get(t) else { break };
                    let outcome = method.run(id, n, seed);
                    *slots[t].lock().expect("bench worker panicked") = Some(outcome);
                });
            }
        });
        for (slot, cell) in outcomes.iter_mut().zip(slots) {
            *slot = cell.into_inner().expect("bench worker panicked");
        }
    }

    // Write everything that succeeded even when some fits failed.
    let mut writer = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::InvalidInput(format!("cannot encode output: {e}"));
    writer.write_record(["problem", "method", "n", "seed", "mse", "se"]).map_err(io)?;
    let mut first_failure: Option<Error> = None;
    for method in &methods {
        let mut mses = Vec::new();
        for (&(m, seed), outcome) in tasks.iter().zip(&mut outcomes) {
            if m != *method {
                continue;
            }
            match outcome.take().expect("every task ran") {
                Ok(mse) => {
                    writer
                        .write_record([
                            problem,
                            method.name(),
                            &n.to_string(),
                            &seed.to_string(),
                            &mse.to_string(),
                            "",
                        ])
                        .map_err(io)?;
                    mses.push(mse);
                }
                Err(e) => {
                    eprintln!("{}: seed {seed} failed: {e}", method.name());
                    first_failure.get_or_insert(e);
                }
            }
        }
        if !mses.is_empty() {
            let mean = mses.iter().sum::<f64>() / mses.len() as f64;
            let se = if mses.len() > 1 {
                let var = mses.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                    / (mses.len() - 1) as f64;
                (var / mses.len() as f64).sqrt()
            } else {
                0.0
            };
            writer
                .write_record([
                    problem,
                    method.name(),
                    &n.to_string(),
                    "",
                    &mean.to_string(),
                    &se.to_string(),
                ])
                .map_err(io)?;
        }
    }
    let bytes = writer.into_inner().expect("vec sink cannot fail");
    write_atomic(out, &bytes)?;
    match first_failure {
        Some(e) => Err(e),
        None => {
            println!("wrote {} to {}", problem, out.display());
            Ok(())
        }
    }
}

fn cmd_minimize(model: &Path, bounds: &str, out: &Path) -> Result<()> {
    let samples = read_model(model)?;
    let (lower, upper) = parse_box(bounds, samples.dim())?;
    let step = samples.len().div_ceil(MINIMIZE_DRAW_CAP).max(1);
    let states: Vec<ModelState> = samples.draws().iter().step_by(step).cloned().collect();
    let sol = minimize_surrogate(&states, &lower, &upper)?;
    #[derive(Serialize)]
    struct MinimizeOut<'a> {
        x_star: &'a [f64],
        value: f64,
    }
    let json = serde_json::to_string_pretty(&MinimizeOut { x_star: &sol.x_star, value: sol.value })
        .expect("two finite fields always serialize");
    write_atomic(out, json.as_bytes())?;
    println!(
        "x_star = [{}], value = {}",
        sol.x_star.iter().map(f64::to_string).collect::<Vec<_>>().join(", "),
        sol.value
    );
    Ok(())
}
