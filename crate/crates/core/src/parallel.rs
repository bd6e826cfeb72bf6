//! Data-parallel driver for the rank-one cascade.
//!
//! Each step of the cascade is two independent per-column sweeps: inner
//! products against `v_l`, then the column updates. Columns are split into
//! contiguous ranges, one per worker, and the two sweeps are separated by a
//! join. Every column is still reduced by [`dot_tree`](crate::linalg::dot_tree)
//! and updated in the same element order as the serial path, so the result
//! is bitwise identical for any worker count.

use std::ops::Range;

use rayon::{ThreadPool, ThreadPoolBuilder};

use crate::error::{Error, Result};
use crate::linalg::{self, DenseMatrix};
use crate::normal::{self, AugWorkspace, StepPlan, WoodburyBasis};

/// Column ranges handed to each worker for one step.
///
/// Indices are workspace columns, `0..n` for `Y` and `n` for the solution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepPlan {
    step: usize,
    workers: usize,
    inner: Vec<Range<usize>>,
    update: Vec<Range<usize>>,
}

impl SweepPlan {
    pub fn step(&self) -> usize {
        self.step
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    /// Inner-product ranges: the pivot column and everything after it.
    pub fn inner_ranges(&self) -> &[Range<usize>] {
        &self.inner
    }

    /// Update ranges: every column after the pivot.
    pub fn update_ranges(&self) -> &[Range<usize>] {
        &self.update
    }

    /// Workers with nothing to do in either phase.
    pub fn idle_workers(&self) -> usize {
        self.inner
            .iter()
            .zip(&self.update)
            .filter(|(a, b)| a.is_empty() && b.is_empty())
            .count()
    }
}

fn split_contiguous(active: Range<usize>, workers: usize) -> Vec<Range<usize>> {
    let len = active.len();
    let chunk = len.div_ceil(workers).max(1);
    (0..workers)
        .map(|w| {
            let start = (active.start + w * chunk).min(active.end);
            let end = (start + chunk).min(active.end);
            start..end
        })
        .collect()
}

/// Splits the active columns of step `l` (1-based) for a workspace with
/// `ncols` `Y` columns into `ceil(active / workers)`-sized contiguous ranges.
/// Trailing workers may get empty ranges.
pub fn column_partition(ncols: usize, workers: usize, l: usize) -> SweepPlan {
    let workers = workers.max(1);
    let inner_start = l.saturating_sub(1).min(ncols);
    SweepPlan {
        step: l,
        workers,
        inner: split_contiguous(inner_start..ncols + 1, workers),
        update: split_contiguous(l.min(ncols + 1)..ncols + 1, workers),
    }
}

/// Read-only parameters of one step, published before the workers start.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamContext {
    pub m: usize,
    pub n: usize,
    pub step: usize,
    /// `d_l` for this step.
    pub scale: f64,
    /// `1 + v_l^T y_{l-1,l}`; only meaningful once phase one has run.
    pub denom: f64,
}

/// A worker pool that lives for one or more solves.
pub struct SweepPool {
    pool: ThreadPool,
    workers: usize,
}

impl std::fmt::Debug for SweepPool {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SweepPool")
            .field("workers", &self.workers)
            .finish()
    }
}

/// Resolves a requested worker count; `0` means the hardware parallelism.
pub fn resolve_workers(requested: usize) -> usize {
    if requested == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        requested
    }
}

impl SweepPool {
    pub fn new(workers: usize) -> Result<Self> {
        let workers = resolve_workers(workers);
        let pool = ThreadPoolBuilder::new()
            .num_threads(workers)
            .thread_name(|i| format!("adascale-sweep-{i}"))
            .build()
            .map_err(|e| Error::InvalidOption(format!("cannot start worker pool: {e}")))?;
        Ok(SweepPool { pool, workers })
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    /// Parallel counterpart of [`normal::rank_one_step`].
    pub fn sweep(&self, ws: &mut AugWorkspace, a: &DenseMatrix, d: &[f64], l: usize) -> Result<()> {
        if let StepPlan::Skip = normal::begin_step(ws, a, d, l)? {
            ws.step = l;
            return Ok(());
        }
        let plan = column_partition(ws.n, self.workers, l);
        let mut ctx = ParamContext {
            m: ws.m,
            n: ws.n,
            step: l,
            scale: d[l - 1],
            denom: f64::NAN,
        };
        let m = ctx.m;

        // phase 1: inner products
        {
            let cols = &ws.cols;
            let v = &ws.v;
            let mut rest = &mut ws.inner[plan.inner[0].start..];
            self.pool.scope(|scope| {
                for range in plan.inner.iter().filter(|r| !r.is_empty()) {
                    let (mine, tail) = std::mem::take(&mut rest).split_at_mut(range.len());
                    rest = tail;
                    let range = range.clone();
                    scope.spawn(move |_| {
                        for (slot, k) in mine.iter_mut().zip(range) {
                            *slot = linalg::dot_tree_unchecked(v, &cols[k * m..(k + 1) * m]);
                        }
                    });
                }
            });
        }

        ctx.denom = normal::step_denominator(ws, l)?;

        // phase 2: column updates
        {
            let ctx = &ctx;
            let inner = &ws.inner;
            let (head, tail) = ws.cols.split_at_mut(l * m);
            let pivot = &head[(l - 1) * m..];
            let mut rest = tail;
            self.pool.scope(|scope| {
                for range in plan.update.iter().filter(|r| !r.is_empty()) {
                    let (mine, tail) = std::mem::take(&mut rest).split_at_mut(range.len() * m);
                    rest = tail;
                    let range = range.clone();
                    scope.spawn(move |_| {
                        for (col, k) in mine.chunks_exact_mut(ctx.m).zip(range) {
                            normal::update_column(col, pivot, inner[k] / ctx.denom);
                        }
                    });
                }
            });
        }

        ws.step = l;
        Ok(())
    }

    /// Runs the whole cascade on this pool. Same result as
    /// [`normal::solve_woodbury`], bit for bit.
    pub fn solve_woodbury(
        &self,
        basis: &WoodburyBasis,
        a: &DenseMatrix,
        d: &[f64],
        b: &[f64],
    ) -> Result<Vec<f64>> {
        let ws = self.run_cascade(basis, a, d, b)?;
        normal::refine(a, d, b, ws.solution().to_vec(), |r| {
            ws.replay(basis, a, d, r)
        })
    }

    /// Parallel counterpart of [`normal::run_cascade`].
    pub fn run_cascade(
        &self,
        basis: &WoodburyBasis,
        a: &DenseMatrix,
        d: &[f64],
        b: &[f64],
    ) -> Result<AugWorkspace> {
        linalg::check_positive(d)?;
        let mut ws = normal::init_workspace(basis, b)?;
        for l in 1..=ws.n {
            self.sweep(&mut ws, a, d, l)?;
        }
        Ok(ws)
    }
}

/// One step on a temporary pool of `workers` threads.
pub fn parallel_sweep(
    ws: &mut AugWorkspace,
    a: &DenseMatrix,
    d: &[f64],
    l: usize,
    workers: usize,
) -> Result<()> {
    SweepPool::new(workers)?.sweep(ws, a, d, l)
}
