//! Command-line front end: `solve`, `gen`, `bench` and `check`.
//!
//! [`run`] parses arguments, validates every flag before doing any work and
//! returns the process exit code:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | optimal, or every check within its threshold |
//! | 2 | invalid flag, I/O or schema error |
//! | 3 | iteration limit |
//! | 4 | numerical breakdown |
//! | 5 | a check exceeded its threshold |
//! | 6 | unbounded |

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::linalg::{self, DenseMatrix};
use crate::model::{self, InteriorPoint, StandardFormLp};
use crate::normal;
use crate::pdas::{self, Backend, SolveOptions, Status};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_ITER_LIMIT: i32 = 3;
pub const EXIT_BREAKDOWN: i32 = 4;
pub const EXIT_CHECK_FAILED: i32 = 5;
pub const EXIT_UNBOUNDED: i32 = 6;

#[derive(Debug, Parser)]
#[command(
    name = "adascale",
    version,
    about = "Primal-dual affine scaling LP solver"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve a problem file from its start point.
    Solve(SolveArgs),
    /// Write a random feasible problem with a strictly feasible start.
    Gen(GenArgs),
    /// Time both backends over a grid of generated problems; CSV on stdout.
    Bench(BenchArgs),
    /// Verify the Z-inverse blocks and backend agreement on seeded instances.
    Check(CheckArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TraceFormat {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct IterationArgs {
    /// Fraction of the maximal step, in (0,1).
    #[arg(long, default_value_t = 0.9, value_parser = parse_rho, allow_negative_numbers = true)]
    pub rho: f64,
    /// Stop once x^T s falls to this; default 1e-8 * (1 + |c^T x0|).
    #[arg(long, value_parser = parse_positive, allow_negative_numbers = true)]
    pub gap_tol: Option<f64>,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
}

impl IterationArgs {
    fn options(&self, backend: Backend, workers: usize) -> SolveOptions {
        SolveOptions {
            rho: self.rho,
            gap_tol: self.gap_tol,
            max_iter: self.max_iter,
            backend,
            workers,
        }
    }
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Problem file (JSON).
    #[arg(long)]
    pub input: PathBuf,
    /// Write the final iterate and status here (JSON).
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, default_value = "woodbury", value_parser = parse_backend)]
    pub backend: Backend,
    #[command(flatten)]
    pub iteration: IterationArgs,
    /// Sweep workers for the Woodbury backend; 0 uses every core.
    #[arg(long, env = "ADASCALE_WORKERS", default_value_t = 1)]
    pub workers: usize,
    /// Write the per-iteration trace here.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = TraceFormat::Csv)]
    pub trace_format: TraceFormat,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub m: usize,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Destination file; stdout when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Problem sizes, e.g. `32x64,64x128`; each needs m < n.
    #[arg(long, default_value = "32x64", value_parser = parse_grid)]
    pub grid: Grid,
    /// Worker counts, e.g. `1,4`; 0 uses every core.
    #[arg(
        long,
        env = "ADASCALE_WORKERS",
        default_value = "1",
        value_delimiter = ','
    )]
    pub workers: Vec<usize>,
    /// Instance seeds per cell, e.g. `1..3`.
    #[arg(long, default_value = "1..3", value_parser = parse_seeds)]
    pub seeds: Seeds,
    /// Restrict to one backend; both when absent.
    #[arg(long, value_parser = parse_backend)]
    pub backend: Option<Backend>,
    #[command(flatten)]
    pub iteration: IterationArgs,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    /// Instance seeds, e.g. `1..50`.
    #[arg(long, default_value = "1..50", value_parser = parse_seeds)]
    pub seeds: Seeds,
    /// Fixed row count; drawn from 1..=5 (at most n) per seed when absent.
    #[arg(long)]
    pub m: Option<usize>,
    /// Fixed column count; drawn from m..=8 per seed when absent.
    #[arg(long)]
    pub n: Option<usize>,
    /// Largest accepted max-norm of Z times its block inverse minus I.
    #[arg(long, default_value_t = 1e-9, value_parser = parse_positive, allow_negative_numbers = true)]
    pub z_tol: f64,
    /// Largest accepted relative gap between the two backends.
    #[arg(long, default_value_t = 1e-8, value_parser = parse_positive, allow_negative_numbers = true)]
    pub backend_tol: f64,
}

/// `MxN` sizes, each with `1 <= m < n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grid(pub Vec<(usize, usize)>);

/// Inclusive seed list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Seeds(pub Vec<u64>);

impl Seeds {
    fn describe(&self) -> String {
        match self.0.as_slice() {
            [] => "none".into(),
            [one] => one.to_string(),
            [first, .., last] if (last - first) as usize + 1 == self.0.len() => {
                format!("{first}..={last}")
            }
            all => format!("{} seeds", all.len()),
        }
    }
}

fn parse_rho(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v < 1.0 => Ok(v),
        _ => Err("rho must be in (0,1)".into()),
    }
}

fn parse_positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a positive number, got {s:?}")),
    }
}

fn parse_backend(s: &str) -> Result<Backend, String> {
    s.parse().map_err(|e: crate::Error| e.to_string())
}

/// Parses `MxN[,MxN...]`.
pub fn parse_grid(s: &str) -> Result<Grid, String> {
    let mut cells = Vec::new();
    for part in s.split(',') {
        let (m, n) = part
            .trim()
            .split_once(['x', 'X'])
            .ok_or_else(|| format!("grid cell {part:?} is not MxN"))?;
        let m: usize = m
            .parse()
            .map_err(|_| format!("bad row count in {part:?}"))?;
        let n: usize = n
            .parse()
            .map_err(|_| format!("bad column count in {part:?}"))?;
        if m == 0 || m >= n {
            return Err(format!("grid cell {part:?} needs 1 <= m < n"));
        }
        cells.push((m, n));
    }
    Ok(Grid(cells))
}

/// Parses `A..B` or `A..=B` (both inclusive), `A`, or `A,B,C`.
pub fn parse_seeds(s: &str) -> Result<Seeds, String> {
    let bad = || format!("seeds must look like 1..50, 7 or 1,2,3; got {s:?}");
    let range = |r: RangeInclusive<u64>| {
        if r.is_empty() {
            Err(bad())
        } else {
            Ok(Seeds(r.collect()))
        }
    };
    if let Some((lo, hi)) = s.split_once("..") {
        let hi = hi.strip_prefix('=').unwrap_or(hi);
        let lo = lo.trim().parse().map_err(|_| bad())?;
        let hi = hi.trim().parse().map_err(|_| bad())?;
        return range(lo..=hi);
    }
    s.split(',')
        .map(|v| v.trim().parse().map_err(|_| bad()))
        .collect::<Result<Vec<_>, _>>()
        .map(Seeds)
}

/// Runs the command line `args` (including the program name), writing
/// results to `out` and diagnostics to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return EXIT_OK;
            }
            let rendered = e.to_string();
            let line = rendered.lines().next().unwrap_or("invalid arguments");
            let _ = writeln!(err, "{line}");
            return EXIT_USAGE;
        }
    };
    let result = match &cli.command {
        Command::Solve(args) => run_solve(args, out),
        Command::Gen(args) => run_gen(args, out),
        Command::Bench(args) => run_bench(args, out),
        Command::Check(args) => run_check(args, out),
    };
    match result {
        Ok(code) => code,
        Err(message) => {
            let _ = writeln!(err, "error: {message}");
            EXIT_USAGE
        }
    }
}

type CmdResult = Result<i32, String>;

fn read_file(path: &Path) -> Result<Vec<u8>, String> {
    fs::read(path).map_err(|e| format!("cannot read {}: {e}", path.display()))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), String> {
    fs::write(path, bytes).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

fn emit(out: &mut dyn Write, text: &str) -> Result<(), String> {
    out.write_all(text.as_bytes())
        .map_err(|e| format!("cannot write output: {e}"))
}

#[derive(Serialize)]
struct SolutionFile<'a> {
    status: String,
    objective: f64,
    gap: f64,
    iterations: usize,
    x: &'a [f64],
    y: &'a [f64],
    s: &'a [f64],
}

fn status_code(status: Status) -> i32 {
    match status {
        Status::Optimal => EXIT_OK,
        Status::IterLimit => EXIT_ITER_LIMIT,
        Status::NumericalBreakdown => EXIT_BREAKDOWN,
        Status::Unbounded => EXIT_UNBOUNDED,
    }
}

fn run_solve(args: &SolveArgs, out: &mut dyn Write) -> CmdResult {
    let opts = args.iteration.options(args.backend, args.workers);
    opts.validate().map_err(|e| e.to_string())?;
    let bytes = read_file(&args.input)?;
    let (lp, start) = model::parse_problem(&bytes).map_err(|e| e.to_string())?;
    let start = start.ok_or_else(|| {
        format!(
            "{} has no start point; generate problems with `adascale gen`",
            args.input.display()
        )
    })?;
    let outcome = pdas::solve_lp(&lp, &start, &opts).map_err(|e| e.to_string())?;
    let objective = lp.objective(&outcome.point.x);

    if let Some(path) = &args.trace {
        let text = match args.trace_format {
            TraceFormat::Csv => pdas::trace_to_csv(&outcome.trace),
            TraceFormat::Json => pdas::trace_to_json(&outcome.trace),
        };
        write_file(path, text.as_bytes())?;
    }
    if let Some(path) = &args.output {
        let solution = SolutionFile {
            status: outcome.status.to_string(),
            objective,
            gap: outcome.gap(),
            iterations: outcome.iterations(),
            x: &outcome.point.x,
            y: &outcome.point.y,
            s: &outcome.point.s,
        };
        let mut text = serde_json::to_string_pretty(&solution).expect("solution serializes");
        text.push('\n');
        write_file(path, text.as_bytes())?;
    }

    let mut report = String::new();
    let _ = writeln!(report, "status: {}", outcome.status);
    let _ = writeln!(report, "objective: {objective:.12e}");
    let _ = writeln!(report, "gap: {:.6e}", outcome.gap());
    let _ = writeln!(report, "iterations: {}", outcome.iterations());
    emit(out, &report)?;
    Ok(status_code(outcome.status))
}

fn run_gen(args: &GenArgs, out: &mut dyn Write) -> CmdResult {
    let (lp, start) =
        model::gen_random_feasible(args.m, args.n, args.seed).map_err(|e| e.to_string())?;
    let bytes = model::serialize_problem(&lp, Some(&start));
    match &args.output {
        Some(path) => write_file(path, &bytes)?,
        None => out
            .write_all(&bytes)
            .map_err(|e| format!("cannot write output: {e}"))?,
    }
    Ok(EXIT_OK)
}

pub const BENCH_HEADER: &str = "m,n,backend,workers,instances,iterations,ms_per_iter";

fn run_bench(args: &BenchArgs, out: &mut dyn Write) -> CmdResult {
    if args.iteration.max_iter == 0 {
        return Err("max-iter must be at least 1".into());
    }
    let backends: Vec<Backend> = match args.backend {
        Some(b) => vec![b],
        None => vec![Backend::Direct, Backend::Woodbury],
    };
    let mut instances = Vec::new();
    for &(m, n) in &args.grid.0 {
        let problems: Vec<_> = args
            .seeds
            .0
            .iter()
            .map(|&seed| model::gen_random_feasible(m, n, seed).ok())
            .collect();
        instances.push(((m, n), problems));
    }

    emit(out, &format!("{BENCH_HEADER}\n"))?;
    for ((m, n), problems) in &instances {
        for &backend in &backends {
            for &workers in &args.workers {
                let opts = args.iteration.options(backend, workers);
                let cell = bench_cell(problems, &opts);
                let (iterations, ms) = match cell {
                    Some((iters, ms)) => (iters.to_string(), ms.to_string()),
                    None => ("NaN".to_string(), "NaN".to_string()),
                };
                emit(
                    out,
                    &format!(
                        "{m},{n},{backend},{workers},{},{iterations},{ms}\n",
                        problems.len()
                    ),
                )?;
            }
        }
    }
    Ok(EXIT_OK)
}

/// Total iterations and mean wall time per iteration, or `None` if any
/// instance fails to generate or to reach optimality.
fn bench_cell(
    problems: &[Option<(StandardFormLp, InteriorPoint)>],
    opts: &SolveOptions,
) -> Option<(usize, f64)> {
    let mut iterations = 0;
    let mut seconds = 0.0;
    for problem in problems {
        let (lp, start) = problem.as_ref()?;
        let clock = Instant::now();
        let outcome = pdas::solve_lp(lp, start, opts).ok()?;
        seconds += clock.elapsed().as_secs_f64();
        if outcome.status != Status::Optimal {
            return None;
        }
        iterations += outcome.iterations();
    }
    if iterations == 0 {
        return Some((0, 0.0));
    }
    Some((iterations, seconds * 1e3 / iterations as f64))
}

/// One verification instance: Z-inverse residual and relative backend gap.
struct CheckResult {
    z_residual: f64,
    backend_gap: f64,
}

fn check_instance(a: &DenseMatrix, d: &[f64], b: &[f64]) -> Result<CheckResult, String> {
    let z_residual = pdas::z_inverse_check(a, d).map_err(|e| e.to_string())?;
    let direct = normal::solve_direct(a, d, b).map_err(|e| e.to_string())?;
    let basis = normal::prepare_woodbury(a).map_err(|e| e.to_string())?;
    let woodbury = normal::solve_woodbury(&basis, a, d, b).map_err(|e| e.to_string())?;
    let diff = direct
        .iter()
        .zip(&woodbury)
        .fold(0.0f64, |acc, (p, q)| acc.max((p - q).abs()));
    Ok(CheckResult {
        z_residual,
        backend_gap: diff / (1.0 + linalg::norm_inf(&direct)),
    })
}

/// Seeded `(A, d, b)` of the given size, or with `m` drawn from `1..=5` and
/// `n` from `m..=8` when absent: `A` uniform in `[-1, 1]` with full row rank,
/// `d` log-uniform in `[1e-2, 1e2]`, `b` uniform in `[-1, 1]`.
pub fn check_instance_data(
    seed: u64,
    m: Option<usize>,
    n: Option<usize>,
) -> Result<(DenseMatrix, Vec<f64>, Vec<f64>), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = m.unwrap_or_else(|| rng.gen_range(1..=n.unwrap_or(5).clamp(1, 5)));
    let n = n.unwrap_or_else(|| rng.gen_range(m..=m.max(8)));
    for _ in 0..100 {
        let data: Vec<f64> = (0..m * n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let a = DenseMatrix::from_col_major(m, n, data).map_err(|e| e.to_string())?;
        if linalg::cholesky_factor(&linalg::gram(&a)).is_err() {
            continue;
        }
        let d = (0..n)
            .map(|_| 10f64.powf(rng.gen_range(-2.0..=2.0)))
            .collect();
        let b = (0..m).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        return Ok((a, d, b));
    }
    Err(format!("seed {seed}: no full-rank {m}x{n} matrix drawn"))
}

fn run_check(args: &CheckArgs, out: &mut dyn Write) -> CmdResult {
    match (args.m, args.n) {
        (Some(0), _) => return Err("m must be at least 1".into()),
        (Some(m), Some(n)) if n < m => return Err(format!("need m <= n, got {m}x{n}")),
        (None, Some(0)) => return Err("n must be at least 1".into()),
        _ => {}
    }
    let mut report = String::new();
    let mut breaches = Vec::new();

    let hand_a = DenseMatrix::from_rows(&[[2.0]]).expect("1x1 matrix");
    let hand = check_instance(&hand_a, &[3.0], &[6.0])?;
    let _ = writeln!(
        report,
        "hand-verified case A=[[2]], d=(3): Z-residual {:e}, backend gap {:e}",
        hand.z_residual, hand.backend_gap
    );
    if hand.z_residual > args.z_tol || hand.backend_gap > args.backend_tol {
        breaches.push("hand-verified case".to_string());
    }

    let (mut max_z, mut max_gap) = (0.0f64, 0.0f64);
    for &seed in &args.seeds.0 {
        let outcome = check_instance_data(seed, args.m, args.n)
            .and_then(|(a, d, b)| check_instance(&a, &d, &b).map(|r| (a, r)));
        match outcome {
            Ok((a, r)) => {
                max_z = max_z.max(r.z_residual);
                max_gap = max_gap.max(r.backend_gap);
                if r.z_residual > args.z_tol || r.backend_gap > args.backend_tol {
                    breaches.push(format!(
                        "seed {seed} ({}x{}): Z-residual {:e}, backend gap {:e}",
                        a.rows(),
                        a.cols(),
                        r.z_residual,
                        r.backend_gap
                    ));
                }
            }
            Err(e) => breaches.push(format!("seed {seed}: {e}")),
        }
    }
    let _ = writeln!(
        report,
        "seeds {}: {} instances",
        args.seeds.describe(),
        args.seeds.0.len()
    );
    let _ = writeln!(
        report,
        "max Z-residual {max_z:.3e} (threshold {:e})",
        args.z_tol
    );
    let _ = writeln!(
        report,
        "max backend gap {max_gap:.3e} (threshold {:e})",
        args.backend_tol
    );
    for breach in &breaches {
        let _ = writeln!(report, "breach: {breach}");
    }
    emit(out, &report)?;
    Ok(if breaches.is_empty() {
        EXIT_OK
    } else {
        EXIT_CHECK_FAILED
    })
}
