//! Primal-dual affine scaling iteration.
//!
//! For a strictly feasible iterate `(x, y, s)` the affine direction solves
//!
//! ```text
//! [ 0  A^T  I ] [dx]   [ 0 ]
//! [ A  0    0 ] [dy] = [ 0 ]
//! [ I  0    D ] [ds]   [-x ]        D = S^{-1} X
//! ```
//!
//! which reduces to
//!
//! ```text
//! (A D A^T) dy = A x,    ds = -A^T dy,    dx = D (A^T dy) - x.
//! ```
//!
//! The step is a damped ratio test. Because `A dx = 0` and `ds` lies in the
//! range of `A^T`, `dx^T ds = 0` and the duality gap contracts by exactly
//! `1 - alpha` per iteration.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, DenseMatrix, LowerTriangular};
use crate::model::{InteriorPoint, StandardFormLp};
use crate::normal::{self, AugWorkspace, WoodburyBasis};
use crate::parallel::{self, SweepPool};

/// Step length reported when no component of the direction blocks the step.
pub const CAP_ALPHA: f64 = 1e6;

/// Which normal-equations solver computes `dy`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Backend {
    Direct,
    #[default]
    Woodbury,
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backend::Direct => "direct",
            Backend::Woodbury => "woodbury",
        })
    }
}

impl FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(Backend::Direct),
            "woodbury" => Ok(Backend::Woodbury),
            other => Err(Error::InvalidOption(format!(
                "backend must be direct or woodbury, got {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    /// Fraction of the maximal step taken, in `(0, 1)`.
    pub rho: f64,
    /// Stop once `x^T s` is at or below this. `None` uses
    /// `1e-8 * (1 + |c^T x0|)`.
    pub gap_tol: Option<f64>,
    pub max_iter: usize,
    pub backend: Backend,
    /// Sweep workers for the Woodbury backend; `0` means all cores.
    pub workers: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            rho: 0.9,
            gap_tol: None,
            max_iter: 500,
            backend: Backend::Woodbury,
            workers: 1,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::InvalidOption("rho must be in (0,1)".into()));
        }
        if let Some(tol) = self.gap_tol {
            if !(tol > 0.0 && tol.is_finite()) {
                return Err(Error::InvalidOption("gap-tol must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Affine-scaling direction and the residuals of its three defining
/// identities.
#[derive(Debug, Clone, PartialEq)]
pub struct Directions {
    pub dx: Vec<f64>,
    pub dy: Vec<f64>,
    pub ds: Vec<f64>,
    /// `|A dx|_inf`
    pub residual_primal: f64,
    /// `|ds + A^T dy|_inf`
    pub residual_dual: f64,
    /// `max_i |s_i dx_i + x_i ds_i + x_i s_i|`
    pub residual_comp: f64,
    /// Correction solves applied to `dy`.
    pub refinements: usize,
}

impl Directions {
    pub fn is_finite(&self) -> bool {
        self.dx
            .iter()
            .chain(&self.dy)
            .chain(&self.ds)
            .all(|v| v.is_finite())
    }

    pub fn max_residual(&self) -> f64 {
        self.residual_primal
            .max(self.residual_dual)
            .max(self.residual_comp)
    }
}

/// Bound on the direction residuals at `p`: `1e-8 * (1 + |x|_inf |s|_inf)`.
pub fn direction_tolerance(p: &InteriorPoint) -> f64 {
    1e-8 * (1.0 + linalg::norm_inf(&p.x) * linalg::norm_inf(&p.s))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    IterLimit,
    /// The ratio test found no blocking component.
    Unbounded,
    NumericalBreakdown,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Optimal => "optimal",
            Status::IterLimit => "iteration limit",
            Status::Unbounded => "unbounded",
            Status::NumericalBreakdown => "numerical breakdown",
        })
    }
}

/// One iteration: the iterate's gap and objectives before the step, the step
/// taken and the direction residuals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub gap: f64,
    pub alpha: f64,
    pub primal_obj: f64,
    pub dual_obj: f64,
    pub r_primal: f64,
    pub r_dual: f64,
    pub r_comp: f64,
    pub millis: f64,
    /// The direct backend replaced Woodbury for this iteration.
    pub fallback: bool,
    pub refinements: usize,
}

pub const TRACE_CSV_HEADER: &str =
    "iter,gap,alpha,primal_obj,dual_obj,r_primal,r_dual,r_comp,millis";

pub fn trace_to_csv(trace: &[TraceRecord]) -> String {
    let mut out = String::from(TRACE_CSV_HEADER);
    out.push('\n');
    for r in trace {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.iter,
            r.gap,
            r.alpha,
            r.primal_obj,
            r.dual_obj,
            r.r_primal,
            r.r_dual,
            r.r_comp,
            r.millis
        ));
    }
    out
}

pub fn trace_to_json(trace: &[TraceRecord]) -> String {
    serde_json::to_string_pretty(trace).expect("trace serializes")
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub point: InteriorPoint,
    pub status: Status,
    pub trace: Vec<TraceRecord>,
}

impl SolveOutcome {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }

    pub fn gap(&self) -> f64 {
        duality_gap(&self.point)
    }
}

/// `d_i = x_i / s_i`.
pub fn scaling_diag(p: &InteriorPoint) -> Result<Vec<f64>> {
    p.check_interior()?;
    if p.x.len() != p.s.len() {
        return Err(Error::DimensionMismatch(format!(
            "|x| = {} but |s| = {}",
            p.x.len(),
            p.s.len()
        )));
    }
    Ok(p.x.iter().zip(&p.s).map(|(x, s)| x / s).collect())
}

/// Normal-equations solver for one problem. The Woodbury basis and the
/// worker pool are built once and reused for every iteration.
pub struct NormalSystem<'a> {
    a: &'a DenseMatrix,
    backend: Backend,
    basis: Option<WoodburyBasis>,
    pool: Option<SweepPool>,
}

/// `A D A^T` for one `D`, kept around to solve for correction terms.
enum Factored {
    Direct(LowerTriangular),
    Woodbury(AugWorkspace),
}

impl<'a> NormalSystem<'a> {
    pub fn new(a: &'a DenseMatrix, backend: Backend, workers: usize) -> Result<Self> {
        let (basis, pool) = match backend {
            Backend::Direct => (None, None),
            Backend::Woodbury => {
                let basis = normal::prepare_woodbury(a)?;
                let pool = match parallel::resolve_workers(workers) {
                    1 => None,
                    w => Some(SweepPool::new(w)?),
                };
                (Some(basis), pool)
            }
        };
        Ok(NormalSystem {
            a,
            backend,
            basis,
            pool,
        })
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    /// Solves `(A diag(d) A^T) w = rhs`. The flag is set when a Woodbury
    /// breakdown was answered by the direct backend.
    pub fn solve(&self, d: &[f64], rhs: &[f64]) -> Result<(Vec<f64>, bool)> {
        self.factor(d, rhs, false)
            .map(|(w, _, fell_back)| (w, fell_back))
    }

    fn factor(
        &self,
        d: &[f64],
        rhs: &[f64],
        force_direct: bool,
    ) -> Result<(Vec<f64>, Factored, bool)> {
        let direct = || -> Result<(Vec<f64>, Factored)> {
            let l = linalg::cholesky_factor(&linalg::scaled_gram(self.a, d)?)?;
            let w = linalg::cholesky_solve(&l, rhs)?;
            Ok((w, Factored::Direct(l)))
        };
        let Some(basis) = &self.basis else {
            let (w, f) = direct()?;
            return Ok((w, f, false));
        };
        if force_direct {
            let (w, f) = direct()?;
            return Ok((w, f, true));
        }
        let attempt = match &self.pool {
            Some(pool) => pool.run_cascade(basis, self.a, d, rhs),
            None => normal::run_cascade(basis, self.a, d, rhs),
        };
        match attempt {
            Ok(ws) => Ok((ws.solution().to_vec(), Factored::Woodbury(ws), false)),
            Err(Error::SingularUpdate { .. }) => {
                let (w, f) = direct()?;
                Ok((w, f, true))
            }
            Err(e) => Err(e),
        }
    }

    fn resolve(&self, factored: &Factored, d: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
        match factored {
            Factored::Direct(l) => linalg::cholesky_solve(l, rhs),
            Factored::Woodbury(ws) => {
                let basis = self.basis.as_ref().expect("woodbury backend has a basis");
                ws.replay(basis, self.a, d, rhs)
            }
        }
    }
}

/// Upper bound on correction solves per direction.
pub const MAX_REFINEMENTS: usize = 8;

/// A refinement iterate. `dy` is carried as the unevaluated sum
/// `dy + dy_lo`; the low part holds what a single double cannot.
struct Candidate {
    dy: Vec<f64>,
    dy_lo: Vec<f64>,
    at_dy: Vec<f64>,
    dx: Vec<f64>,
    /// `-A dx`, the residual `A x - A D A^T dy`.
    residual: Vec<f64>,
    residual_norm: f64,
}

impl Candidate {
    fn evaluate(
        a: &DenseMatrix,
        d: &[f64],
        x: &[f64],
        dy: Vec<f64>,
        dy_lo: Vec<f64>,
    ) -> Result<Self> {
        let at_dy: Vec<f64> = (0..a.cols())
            .map(|j| linalg::dot_compensated_split(a.col(j), &dy, &dy_lo))
            .collect();
        let dx: Vec<f64> = d
            .iter()
            .zip(&at_dy)
            .zip(x)
            .map(|((d, w), x)| d * w - x)
            .collect();
        let residual: Vec<f64> = linalg::mat_vec_compensated(a, &dx)?
            .iter()
            .map(|v| -v)
            .collect();
        let residual_norm = linalg::norm_inf(&residual);
        Ok(Candidate {
            dy,
            dy_lo,
            at_dy,
            dx,
            residual,
            residual_norm,
        })
    }

    /// Adds `correction` to `dy + dy_lo` without rounding it away.
    fn corrected(&self, correction: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut hi = Vec::with_capacity(self.dy.len());
        let mut lo = Vec::with_capacity(self.dy.len());
        for ((&h, &l), &c) in self.dy.iter().zip(&self.dy_lo).zip(correction) {
            let s = h + c;
            let z = s - h;
            let err = (h - (s - z)) + (c - z) + l;
            let top = s + err;
            hi.push(top);
            lo.push(err - (top - s));
        }
        (hi, lo)
    }
}

/// Relative residual `|A dx| / (1 + |A x|)` above which a refined Woodbury
/// direction is recomputed with the direct backend.
pub const FALLBACK_RESIDUAL: f64 = 1e-10;

/// Refines `dy` until the residual stops shrinking by a tenth; returns the
/// best iterate and the number of accepted corrections.
fn refine_direction(
    system: &NormalSystem<'_>,
    factored: &Factored,
    d: &[f64],
    x: &[f64],
    dy: Vec<f64>,
) -> Result<(Candidate, usize)> {
    let a = system.a;
    let zeros = vec![0.0; dy.len()];
    let mut best = Candidate::evaluate(a, d, x, dy, zeros)?;
    let mut refinements = 0;
    while refinements < MAX_REFINEMENTS && best.residual_norm > 0.0 {
        let correction = system.resolve(factored, d, &best.residual)?;
        let (dy, dy_lo) = best.corrected(&correction);
        let next = Candidate::evaluate(a, d, x, dy, dy_lo)?;
        if !(next.residual_norm <= 0.9 * best.residual_norm) {
            if next.residual_norm < best.residual_norm {
                best = next;
                refinements += 1;
            }
            break;
        }
        best = next;
        refinements += 1;
    }
    Ok((best, refinements))
}

/// Computes the affine-scaling direction at `p`. The returned flag reports a
/// fallback to the direct backend.
///
/// `dy` is refined against the residual `A dx` with the factorization (or
/// recorded cascade) of the first solve, until the residual stops halving.
/// Near the optimum `D` spans many orders of magnitude and a single solve
/// leaves `A dx` large enough to spoil `dx^T ds = 0` and primal feasibility.
/// Rounding in `A^T dy` is amplified by `D`, so `dy` is accumulated in two
/// parts and `A^T dy` and `A dx` are evaluated with compensated dot
/// products; otherwise the precision of `dy` itself sets the floor of the
/// residual. The returned `dy` is the rounded sum. A Woodbury direction whose
/// refined residual stays above [`FALLBACK_RESIDUAL`] is recomputed with the
/// direct backend, and the better of the two is kept.
pub fn compute_directions(
    lp: &StandardFormLp,
    p: &InteriorPoint,
    system: &NormalSystem<'_>,
) -> Result<(Directions, bool)> {
    p.check_dims(lp.m(), lp.n())?;
    let d = scaling_diag(p)?;
    let a = lp.a();
    let rhs = linalg::mat_vec(a, &p.x)?;
    let (dy, factored, mut fell_back) = system.factor(&d, &rhs, false)?;
    let (mut best, mut refinements) = refine_direction(system, &factored, &d, &p.x, dy)?;
    let limit = FALLBACK_RESIDUAL * (1.0 + linalg::norm_inf(&rhs));
    if matches!(factored, Factored::Woodbury(_)) && !(best.residual_norm <= limit) {
        if let Ok((dy, factored, _)) = system.factor(&d, &rhs, true) {
            let (alt, alt_refinements) = refine_direction(system, &factored, &d, &p.x, dy)?;
            if !(alt.residual_norm >= best.residual_norm) {
                (best, refinements, fell_back) = (alt, alt_refinements, true);
            }
        }
    }

    let Candidate {
        dy,
        at_dy,
        dx,
        residual_norm,
        ..
    } = best;
    let ds: Vec<f64> = at_dy.iter().map(|v| -v).collect();
    let residual_dual = ds
        .iter()
        .zip(&at_dy)
        .fold(0.0f64, |acc, (s, w)| acc.max((s + w).abs()));
    let residual_comp = (0..lp.n()).fold(0.0f64, |acc, i| {
        acc.max((p.s[i] * dx[i] + p.x[i] * ds[i] + p.x[i] * p.s[i]).abs())
    });
    Ok((
        Directions {
            dx,
            dy,
            ds,
            residual_primal: residual_norm,
            residual_dual,
            residual_comp,
            refinements,
        },
        fell_back,
    ))
}

/// Damped ratio test: `rho` times the largest step keeping `x` and `s`
/// positive, or [`CAP_ALPHA`] when nothing blocks.
pub fn step_length(p: &InteriorPoint, dir: &Directions, rho: f64) -> f64 {
    let ratios = |v: &[f64], dv: &[f64]| {
        v.iter()
            .zip(dv)
            .filter(|(_, &dv)| dv < 0.0)
            .map(|(&v, &dv)| -v / dv)
            .fold(f64::INFINITY, f64::min)
    };
    let max_step = ratios(&p.x, &dir.dx).min(ratios(&p.s, &dir.ds));
    if max_step.is_finite() {
        (rho * max_step).min(CAP_ALPHA)
    } else {
        CAP_ALPHA
    }
}

pub fn duality_gap(p: &InteriorPoint) -> f64 {
    p.x.iter().zip(&p.s).map(|(x, s)| x * s).sum()
}

fn advance(p: &InteriorPoint, dir: &Directions, alpha: f64) -> InteriorPoint {
    let step = |v: &[f64], dv: &[f64]| v.iter().zip(dv).map(|(v, dv)| v + alpha * dv).collect();
    InteriorPoint {
        x: step(&p.x, &dir.dx),
        y: step(&p.y, &dir.dy),
        s: step(&p.s, &dir.ds),
    }
}

/// Runs the affine-scaling iteration from a strictly feasible start.
///
/// Stops with [`Status::Optimal`] once the gap reaches the tolerance, with
/// [`Status::IterLimit`] after `max_iter` steps, with [`Status::Unbounded`]
/// when the ratio test is unblocked and with [`Status::NumericalBreakdown`]
/// when no backend can produce a usable direction. The trace has one record
/// per step taken.
pub fn solve_lp(
    lp: &StandardFormLp,
    start: &InteriorPoint,
    opts: &SolveOptions,
) -> Result<SolveOutcome> {
    opts.validate()?;
    lp.check_start(start)?;
    let gap_tol = opts
        .gap_tol
        .unwrap_or_else(|| 1e-8 * (1.0 + lp.objective(&start.x).abs()));
    let system = NormalSystem::new(lp.a(), opts.backend, opts.workers)?;

    let mut point = start.clone();
    let mut trace = Vec::new();
    let status = loop {
        let gap = duality_gap(&point);
        if gap <= gap_tol {
            break Status::Optimal;
        }
        if trace.len() >= opts.max_iter {
            break Status::IterLimit;
        }
        let clock = Instant::now();
        let (dir, fallback) = match compute_directions(lp, &point, &system) {
            Ok(found) if found.0.is_finite() => found,
            _ => break Status::NumericalBreakdown,
        };
        let alpha = step_length(&point, &dir, opts.rho);
        if alpha >= CAP_ALPHA {
            break Status::Unbounded;
        }
        let next = advance(&point, &dir, alpha);
        if !next.is_interior() {
            break Status::NumericalBreakdown;
        }
        trace.push(TraceRecord {
            iter: trace.len(),
            gap,
            alpha,
            primal_obj: lp.objective(&point.x),
            dual_obj: lp.dual_objective(&point.y),
            r_primal: dir.residual_primal,
            r_dual: dir.residual_dual,
            r_comp: dir.residual_comp,
            millis: clock.elapsed().as_secs_f64() * 1e3,
            fallback,
            refinements: dir.refinements,
        });
        point = next;
    };
    Ok(SolveOutcome {
        point,
        status,
        trace,
    })
}

/// Assembles `Z = [[0, A^T, I], [A, 0, 0], [I, 0, D]]`, ordered as
/// `(dx, dy, ds)`.
pub fn z_matrix(a: &DenseMatrix, d: &[f64]) -> Result<DenseMatrix> {
    let (m, n) = (a.rows(), a.cols());
    if d.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "scaling of length {} for {n} columns",
            d.len()
        )));
    }
    let size = 2 * n + m;
    let mut z = DenseMatrix::zeros(size, size);
    for i in 0..n {
        for j in 0..m {
            z.set(i, n + j, a.get(j, i));
            z.set(n + j, i, a.get(j, i));
        }
        z.set(i, n + m + i, 1.0);
        z.set(n + m + i, i, 1.0);
        z.set(n + m + i, n + m + i, d[i]);
    }
    Ok(z)
}

/// Closed-form inverse of [`z_matrix`] in blocks of `X = (A D A^T)^{-1}`:
///
/// ```text
/// [ D A^T X A D - D     D A^T X    I - D A^T X A ]
/// [ X A D               X          -X A          ]
/// [ (I - D A^T X A)^T   -A^T X     A^T X A       ]
/// ```
///
/// `X` is assembled column by column with [`normal::solve_direct`].
pub fn z_inverse_blocks(a: &DenseMatrix, d: &[f64]) -> Result<DenseMatrix> {
    let (m, n) = (a.rows(), a.cols());
    linalg::check_positive(d)?;
    if d.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "scaling of length {} for {n} columns",
            d.len()
        )));
    }
    let mut x = DenseMatrix::zeros(m, m);
    let mut unit = vec![0.0; m];
    for j in 0..m {
        unit[j] = 1.0;
        let col = normal::solve_direct(a, d, &unit)?;
        x.col_mut(j).copy_from_slice(&col);
        unit[j] = 0.0;
    }
    let dmat = DenseMatrix::diag(d);
    let at = a.transpose();
    let d_at = dmat.matmul(&at)?;
    let xa = x.matmul(a)?;
    let xad = xa.matmul(&dmat)?;
    let d_at_x = d_at.matmul(&x)?;
    let d_at_xa = d_at.matmul(&xa)?;
    let at_x = at.matmul(&x)?;
    let at_xa = at.matmul(&xa)?;
    let d_at_xad = d_at.matmul(&xad)?;

    let size = 2 * n + m;
    let mut inv = DenseMatrix::zeros(size, size);
    let (r1, r2, r3) = (0, n, n + m);
    for i in 0..n {
        for j in 0..n {
            let eye = if i == j { 1.0 } else { 0.0 };
            inv.set(r1 + i, r1 + j, d_at_xad.get(i, j) - eye * d[i]);
            inv.set(r1 + i, r3 + j, eye - d_at_xa.get(i, j));
            inv.set(r3 + i, r1 + j, eye - d_at_xa.get(j, i));
            inv.set(r3 + i, r3 + j, at_xa.get(i, j));
        }
        for j in 0..m {
            inv.set(r1 + i, r2 + j, d_at_x.get(i, j));
            inv.set(r3 + i, r2 + j, -at_x.get(i, j));
        }
    }
    for i in 0..m {
        for j in 0..n {
            inv.set(r2 + i, r1 + j, xad.get(i, j));
            inv.set(r2 + i, r3 + j, -xa.get(i, j));
        }
        for j in 0..m {
            inv.set(r2 + i, r2 + j, x.get(i, j));
        }
    }
    Ok(inv)
}

/// `|Z * Zinv - I|_max` for the closed-form block inverse.
pub fn z_inverse_check(a: &DenseMatrix, d: &[f64]) -> Result<f64> {
    let z = z_matrix(a, d)?;
    let inv = z_inverse_blocks(a, d)?;
    let prod = z.matmul(&inv)?;
    let size = prod.rows();
    let mut worst = 0.0f64;
    for j in 0..size {
        for i in 0..size {
            let eye = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((prod.get(i, j) - eye).abs());
        }
    }
    Ok(worst)
}
