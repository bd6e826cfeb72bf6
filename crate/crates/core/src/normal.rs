//! Backends for the normal equations `(A diag(d) A^T) w = b`.
//!
//! [`solve_direct`] forms `A D A^T` and factors it. [`solve_woodbury`] never
//! forms the scaled matrix at all. It writes
//!
//! ```text
//! A D A^T = A A^T + sum_l a_l v_l^T,    v_l = (d_l - 1) a_l
//! ```
//!
//! and applies the `n` rank-one corrections one after another to the columns
//! of `Y = (A A^T)^{-1} A` and to the running solution `x`:
//!
//! ```text
//! x_l     = x_{l-1}     - [v_l^T x_{l-1}     / (1 + v_l^T y_{l-1,l})] y_{l-1,l}
//! y_{l,k} = y_{l-1,k}   - [v_l^T y_{l-1,k}   / (1 + v_l^T y_{l-1,l})] y_{l-1,l}
//! ```
//!
//! starting from `x_0 = (A A^T)^{-1} b`. Only `d` changes between interior
//! point iterations, so the factor of `A A^T` and `Y` are computed once
//! ([`WoodburyBasis`]) and every solve starts by copying `Y` into a fresh
//! [`AugWorkspace`].
//!
//! One solve costs `O(m n^2)` against `O(m^2 n + m^3)` for the direct path,
//! so the direct backend is the better pick when `n` is much larger than `m`.
//!
//! Both solvers finish with a few rounds of iterative refinement against
//! [`normal_residual`], reusing the Cholesky factor or the finished cascade.
//! Forming `A D A^T` squares the conditioning of `D^{1/2} A^T`, and without
//! the correction the two backends can disagree well beyond `1e-8` once `d`
//! spans several decades.

use crate::error::{Error, Result};
use crate::linalg::{self, DenseMatrix, LowerTriangular};

/// Upper bound on correction solves in [`solve_direct`] and
/// [`solve_woodbury`].
pub const MAX_REFINEMENTS: usize = 5;

/// Solves `(A diag(d) A^T) w = b` with a Cholesky factorization of the scaled
/// Gram matrix, then refines.
pub fn solve_direct(a: &DenseMatrix, d: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != a.rows() {
        return Err(Error::DimensionMismatch(format!(
            "right-hand side of length {} for {} rows",
            b.len(),
            a.rows()
        )));
    }
    let m = linalg::scaled_gram(a, d)?;
    let l = linalg::cholesky_factor(&m)?;
    let w = linalg::cholesky_solve(&l, b)?;
    refine(a, d, b, w, |r| linalg::cholesky_solve(&l, r))
}

/// `b - A diag(d) A^T w`, evaluated as `b - A (d * (A^T w))` with
/// compensated dot products.
pub fn normal_residual(a: &DenseMatrix, d: &[f64], w: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if d.len() != a.cols() || b.len() != a.rows() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} matrix with d of length {} and b of length {}",
            a.rows(),
            a.cols(),
            d.len(),
            b.len()
        )));
    }
    let mut t = linalg::mat_t_vec_compensated(a, w)?;
    for (t, d) in t.iter_mut().zip(d) {
        *t *= d;
    }
    let adat_w = linalg::mat_vec_compensated(a, &t)?;
    Ok(b.iter().zip(&adat_w).map(|(b, v)| b - v).collect())
}

/// Adds corrections `solve(r)` to `w` while the residual keeps halving, and
/// returns the iterate with the smallest residual.
pub(crate) fn refine(
    a: &DenseMatrix,
    d: &[f64],
    b: &[f64],
    mut w: Vec<f64>,
    solve: impl Fn(&[f64]) -> Result<Vec<f64>>,
) -> Result<Vec<f64>> {
    let mut r = normal_residual(a, d, &w, b)?;
    let mut norm = linalg::norm_inf(&r);
    for _ in 0..MAX_REFINEMENTS {
        if norm == 0.0 {
            break;
        }
        let correction = solve(&r)?;
        let next: Vec<f64> = w.iter().zip(&correction).map(|(w, c)| w + c).collect();
        let next_r = normal_residual(a, d, &next, b)?;
        let next_norm = linalg::norm_inf(&next_r);
        if !(next_norm < norm) {
            break;
        }
        let halved = next_norm <= 0.5 * norm;
        (w, r, norm) = (next, next_r, next_norm);
        if !halved {
            break;
        }
    }
    Ok(w)
}

/// Iteration-invariant part of the Woodbury backend: the Cholesky factor of
/// `A A^T` and `Y = (A A^T)^{-1} A`.
#[derive(Debug, Clone, PartialEq)]
pub struct WoodburyBasis {
    gram_factor: LowerTriangular,
    y: DenseMatrix,
}

impl WoodburyBasis {
    pub fn gram_factor(&self) -> &LowerTriangular {
        &self.gram_factor
    }

    pub fn y(&self) -> &DenseMatrix {
        &self.y
    }

    pub fn m(&self) -> usize {
        self.y.rows()
    }

    pub fn n(&self) -> usize {
        self.y.cols()
    }
}

pub fn prepare_woodbury(a: &DenseMatrix) -> Result<WoodburyBasis> {
    let gram_factor = linalg::cholesky_factor(&linalg::gram(a))?;
    let mut y = DenseMatrix::zeros(a.rows(), a.cols());
    for k in 0..a.cols() {
        let col = linalg::cholesky_solve(&gram_factor, a.col(k))?;
        y.col_mut(k).copy_from_slice(&col);
    }
    Ok(WoodburyBasis { gram_factor, y })
}

/// Working storage for one Woodbury solve.
///
/// ```text
/// +---------------------------+-----+
/// |  y_1   y_2   ...   y_n    |  x  |   m rows, column-contiguous
/// +---------------------------+-----+
/// |  inner products p_1 .. p_n, p_x |   one row
/// +---------------------------------+
/// ```
///
/// plus an `m`-vector holding the current `v_l`. `V` itself is never stored;
/// each `v_l` is rebuilt from column `l` of `A` when its step runs.
#[derive(Debug, Clone, PartialEq)]
pub struct AugWorkspace {
    pub(crate) m: usize,
    pub(crate) n: usize,
    pub(crate) cols: Vec<f64>,
    pub(crate) inner: Vec<f64>,
    pub(crate) v: Vec<f64>,
    pub(crate) step: usize,
}

impl AugWorkspace {
    /// Number of rank-one steps applied so far.
    pub fn step(&self) -> usize {
        self.step
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Column `k` of the block, `0 <= k <= n`; column `n` is the solution.
    pub fn column(&self, k: usize) -> &[f64] {
        &self.cols[k * self.m..(k + 1) * self.m]
    }

    pub fn solution(&self) -> &[f64] {
        self.column(self.n)
    }

    pub fn into_solution(mut self) -> Vec<f64> {
        self.cols.drain(..self.n * self.m);
        self.cols
    }

    pub fn inner_products(&self) -> &[f64] {
        &self.inner
    }

    pub fn v_scratch(&self) -> &[f64] {
        &self.v
    }

    /// Scalars held by the workspace (block, inner-product row and `v`).
    pub fn scalar_count(&self) -> usize {
        self.cols.len() + self.inner.len() + self.v.len()
    }

    /// Solves the same system for another right-hand side by replaying the
    /// finished cascade on it.
    ///
    /// After step `l` the workspace keeps the pivot column `y_{l-1,l}` in
    /// column `l` and `v_l^T y_{l-1,l}` in the inner-product row, which is all
    /// the solution column ever reads. The replay costs `O(m n)` and returns
    /// exactly the bits a fresh cascade on `rhs` would produce. `d` must be
    /// the scaling the cascade ran with.
    pub fn replay(
        &self,
        basis: &WoodburyBasis,
        a: &DenseMatrix,
        d: &[f64],
        rhs: &[f64],
    ) -> Result<Vec<f64>> {
        if self.step != self.n {
            return Err(Error::StepOutOfOrder {
                current: self.step,
                requested: self.n,
            });
        }
        if a.rows() != self.m || a.cols() != self.n || d.len() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "workspace is {}x{}, got A {}x{} and d of length {}",
                self.m,
                self.n,
                a.rows(),
                a.cols(),
                d.len()
            )));
        }
        let mut x = linalg::cholesky_solve(&basis.gram_factor, rhs)?;
        let mut v = vec![0.0; self.m];
        for l in 1..=self.n {
            let scale = d[l - 1] - 1.0;
            if scale == 0.0 {
                continue;
            }
            for (v, &a) in v.iter_mut().zip(a.col(l - 1)) {
                *v = a * scale;
            }
            let p = linalg::dot_tree_unchecked(&v, &x);
            let denom = 1.0 + self.inner[l - 1];
            update_column(&mut x, self.column(l - 1), p / denom);
        }
        Ok(x)
    }
}

pub fn init_workspace(basis: &WoodburyBasis, b: &[f64]) -> Result<AugWorkspace> {
    let (m, n) = (basis.m(), basis.n());
    if b.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "right-hand side of length {} for {m} rows",
            b.len()
        )));
    }
    let mut cols = Vec::with_capacity(m * (n + 1));
    cols.extend_from_slice(basis.y.as_slice());
    cols.extend(linalg::cholesky_solve(&basis.gram_factor, b)?);
    Ok(AugWorkspace {
        m,
        n,
        cols,
        inner: vec![0.0; n + 1],
        v: vec![0.0; m],
        step: 0,
    })
}

/// Outcome of preparing step `l`.
pub(crate) enum StepPlan {
    /// `d_l == 1`, so `v_l` is exactly zero.
    Skip,
    Update,
}

/// Validates the arguments of step `l` and loads `v_l` into the scratch
/// vector.
pub(crate) fn begin_step(
    ws: &mut AugWorkspace,
    a: &DenseMatrix,
    d: &[f64],
    l: usize,
) -> Result<StepPlan> {
    if a.rows() != ws.m || a.cols() != ws.n || d.len() != ws.n {
        return Err(Error::DimensionMismatch(format!(
            "workspace is {}x{}, got A {}x{} and d of length {}",
            ws.m,
            ws.n,
            a.rows(),
            a.cols(),
            d.len()
        )));
    }
    if l == 0 || l > ws.n || l != ws.step + 1 {
        return Err(Error::StepOutOfOrder {
            current: ws.step,
            requested: l,
        });
    }
    let scale = d[l - 1] - 1.0;
    if scale == 0.0 {
        return Ok(StepPlan::Skip);
    }
    for (v, &a) in ws.v.iter_mut().zip(a.col(l - 1)) {
        *v = a * scale;
    }
    Ok(StepPlan::Update)
}

/// Denominator `1 + v_l^T y_{l-1,l}`, rejected when it is within
/// `1e-12 * (1 + |v_l^T y_{l-1,l}|)` of zero.
pub(crate) fn step_denominator(ws: &AugWorkspace, l: usize) -> Result<f64> {
    let pivot_inner = ws.inner[l - 1];
    let denom = 1.0 + pivot_inner;
    if denom.abs() <= 1e-12 * (1.0 + pivot_inner.abs()) {
        return Err(Error::SingularUpdate { step: l, denom });
    }
    Ok(denom)
}

#[inline]
pub(crate) fn update_column(col: &mut [f64], pivot: &[f64], factor: f64) {
    for (c, &p) in col.iter_mut().zip(pivot) {
        *c -= factor * p;
    }
}

/// Applies rank-one step `l` (1-based, `ws.step` must equal `l - 1`).
///
/// Phase one computes `v_l^T col_k` for the pivot column and every later
/// column including the solution. Phase two subtracts the scaled pivot
/// column from every later column. The pivot column itself is left as is;
/// columns `1..=l` are never touched again.
pub fn rank_one_step(ws: &mut AugWorkspace, a: &DenseMatrix, d: &[f64], l: usize) -> Result<()> {
    if let StepPlan::Skip = begin_step(ws, a, d, l)? {
        ws.step = l;
        return Ok(());
    }
    let m = ws.m;
    for k in l - 1..=ws.n {
        ws.inner[k] = linalg::dot_tree_unchecked(&ws.v, &ws.cols[k * m..(k + 1) * m]);
    }
    let denom = step_denominator(ws, l)?;
    let (head, tail) = ws.cols.split_at_mut(l * m);
    let pivot = &head[(l - 1) * m..];
    for (offset, col) in tail.chunks_exact_mut(m).enumerate() {
        let k = l + offset;
        update_column(col, pivot, ws.inner[k] / denom);
    }
    ws.step = l;
    Ok(())
}

/// Solves `(A diag(d) A^T) w = b` through the rank-one cascade, then refines
/// with [`AugWorkspace::replay`].
pub fn solve_woodbury(
    basis: &WoodburyBasis,
    a: &DenseMatrix,
    d: &[f64],
    b: &[f64],
) -> Result<Vec<f64>> {
    let ws = run_cascade(basis, a, d, b)?;
    refine(a, d, b, ws.solution().to_vec(), |r| {
        ws.replay(basis, a, d, r)
    })
}

/// Full serial cascade, returning the finished workspace.
pub fn run_cascade(
    basis: &WoodburyBasis,
    a: &DenseMatrix,
    d: &[f64],
    b: &[f64],
) -> Result<AugWorkspace> {
    linalg::check_positive(d)?;
    let mut ws = init_workspace(basis, b)?;
    for l in 1..=ws.n {
        rank_one_step(&mut ws, a, d, l)?;
    }
    Ok(ws)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mat(rows: &[&[f64]]) -> DenseMatrix {
        DenseMatrix::from_rows(rows).unwrap()
    }

    fn random_instance(
        rng: &mut ChaCha8Rng,
        m: usize,
        n: usize,
    ) -> (DenseMatrix, Vec<f64>, Vec<f64>) {
        loop {
            let a = DenseMatrix::from_col_major(
                m,
                n,
                (0..m * n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            )
            .unwrap();
            if linalg::cholesky_factor(&linalg::gram(&a)).is_err() {
                continue;
            }
            let d = (0..n)
                .map(|_| 10f64.powf(rng.gen_range(-3.0..3.0)))
                .collect();
            let b = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
            return (a, d, b);
        }
    }

    #[test]
    fn solve_direct_examples() {
        let w = solve_direct(&mat(&[&[1.0, 1.0]]), &[0.5, 0.25], &[1.0]).unwrap();
        assert!((w[0] - 4.0 / 3.0).abs() < 1e-15);
        let w = solve_direct(&DenseMatrix::identity(2), &[1.0, 1.0], &[3.0, 4.0]).unwrap();
        assert_eq!(w, vec![3.0, 4.0]);
        let w = solve_direct(&mat(&[&[2.0]]), &[3.0], &[6.0]).unwrap();
        assert!((w[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn solve_direct_propagates_failures() {
        let a = mat(&[&[1.0, 1.0], &[2.0, 2.0]]);
        assert!(matches!(
            solve_direct(&a, &[1.0, 1.0], &[1.0, 1.0]),
            Err(Error::NotPositiveDefinite { .. })
        ));
        assert!(matches!(
            solve_direct(&mat(&[&[2.0]]), &[-1.0], &[1.0]),
            Err(Error::NonPositiveScaling { .. })
        ));
    }

    #[test]
    fn prepare_examples() {
        let basis = prepare_woodbury(&DenseMatrix::identity(2)).unwrap();
        assert_eq!(basis.gram_factor().as_matrix(), &DenseMatrix::identity(2));
        assert_eq!(basis.y(), &DenseMatrix::identity(2));

        let basis = prepare_woodbury(&mat(&[&[2.0]])).unwrap();
        assert_eq!(basis.gram_factor().as_matrix().as_slice(), &[2.0]);
        assert_eq!(basis.y().as_slice(), &[0.5]);

        let basis = prepare_woodbury(&mat(&[&[1.0, 1.0]])).unwrap();
        for &y in basis.y().as_slice() {
            assert!((y - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn prepare_rejects_rank_deficient() {
        assert!(matches!(
            prepare_woodbury(&mat(&[&[1.0, 1.0], &[2.0, 2.0]])),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn basis_reproduces_a() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (a, _, _) = random_instance(&mut rng, 6, 11);
        let basis = prepare_woodbury(&a).unwrap();
        let back = linalg::gram(&a).matmul(basis.y()).unwrap();
        for k in 0..a.cols() {
            let scale = linalg::norm_inf(a.col(k));
            for (p, q) in back.col(k).iter().zip(a.col(k)) {
                assert!((p - q).abs() <= 1e-9 * scale);
            }
        }
    }

    #[test]
    fn init_examples() {
        let basis = prepare_woodbury(&mat(&[&[2.0]])).unwrap();
        let ws = init_workspace(&basis, &[6.0]).unwrap();
        assert_eq!(ws.solution(), &[1.5]);
        assert_eq!(ws.step(), 0);
        assert_eq!(ws.inner_products(), &[0.0, 0.0]);

        let ws = init_workspace(&basis, &[0.0]).unwrap();
        assert_eq!(ws.solution(), &[0.0]);

        let basis = prepare_woodbury(&DenseMatrix::identity(2)).unwrap();
        let ws = init_workspace(&basis, &[3.0, 4.0]).unwrap();
        assert_eq!(ws.solution(), &[3.0, 4.0]);
        assert_eq!(ws.column(0), &[1.0, 0.0]);

        assert!(matches!(
            init_workspace(&basis, &[1.0]),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn rank_one_step_worked_values() {
        let a = mat(&[&[2.0]]);
        let basis = prepare_woodbury(&a).unwrap();
        let mut ws = init_workspace(&basis, &[6.0]).unwrap();
        rank_one_step(&mut ws, &a, &[3.0], 1).unwrap();
        assert_eq!(ws.v_scratch(), &[4.0]);
        assert_eq!(ws.inner_products(), &[2.0, 6.0]);
        assert_eq!(ws.solution(), &[0.5]);
        assert_eq!(ws.column(0), &[0.5]);
        assert_eq!(ws.step(), 1);
    }

    #[test]
    fn rank_one_step_skip_when_d_is_one() {
        let a = mat(&[&[1.0, 2.0], &[0.5, -1.0]]);
        let basis = prepare_woodbury(&a).unwrap();
        let mut ws = init_workspace(&basis, &[1.0, 2.0]).unwrap();
        let before = ws.clone();
        rank_one_step(&mut ws, &a, &[1.0, 4.0], 1).unwrap();
        assert_eq!(ws.step(), 1);
        let mut expected = before;
        expected.step = 1;
        assert_eq!(ws, expected);
    }

    #[test]
    fn rank_one_step_singular_update() {
        let a = mat(&[&[1.0]]);
        let basis = prepare_woodbury(&a).unwrap();
        let mut ws = init_workspace(&basis, &[1.0]).unwrap();
        match rank_one_step(&mut ws, &a, &[0.0], 1) {
            Err(Error::SingularUpdate { step: 1, denom }) => assert_eq!(denom, 0.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rank_one_step_order_is_enforced() {
        let a = mat(&[&[1.0, 2.0]]);
        let basis = prepare_woodbury(&a).unwrap();
        let mut ws = init_workspace(&basis, &[1.0]).unwrap();
        assert!(matches!(
            rank_one_step(&mut ws, &a, &[2.0, 2.0], 2),
            Err(Error::StepOutOfOrder {
                current: 0,
                requested: 2
            })
        ));
        assert!(rank_one_step(&mut ws, &a, &[2.0, 2.0], 0).is_err());
        rank_one_step(&mut ws, &a, &[2.0, 2.0], 1).unwrap();
        rank_one_step(&mut ws, &a, &[2.0, 2.0], 2).unwrap();
        assert!(rank_one_step(&mut ws, &a, &[2.0, 2.0], 3).is_err());
        assert!(matches!(
            rank_one_step(&mut ws, &a, &[2.0], 3),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn solve_woodbury_examples() {
        let a = mat(&[&[2.0]]);
        let basis = prepare_woodbury(&a).unwrap();
        assert_eq!(
            solve_woodbury(&basis, &a, &[3.0], &[6.0]).unwrap(),
            vec![0.5]
        );

        let id = DenseMatrix::identity(2);
        let basis = prepare_woodbury(&id).unwrap();
        let w = solve_woodbury(&basis, &id, &[2.0, 5.0], &[4.0, 10.0]).unwrap();
        assert!((w[0] - 2.0).abs() < 1e-15 && (w[1] - 2.0).abs() < 1e-15);

        assert!(matches!(
            solve_woodbury(&basis, &id, &[2.0, 0.0], &[4.0, 10.0]),
            Err(Error::NonPositiveScaling { index: 1, .. })
        ));
    }

    #[test]
    fn unit_scaling_reduces_to_base_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (a, _, b) = random_instance(&mut rng, 4, 9);
        let basis = prepare_woodbury(&a).unwrap();
        let ones = vec![1.0; 9];
        let base = linalg::cholesky_solve(basis.gram_factor(), &b).unwrap();
        let cascade = run_cascade(&basis, &a, &ones, &b).unwrap();
        assert_eq!(cascade.solution(), base.as_slice());
        // Refinement may move the answer within the base solve's own error.
        let w = solve_woodbury(&basis, &a, &ones, &b).unwrap();
        for (w, base) in w.iter().zip(&base) {
            assert!(
                (w - base).abs() <= 1e-12 * (1.0 + base.abs()),
                "{w} vs {base}"
            );
        }
    }

    #[test]
    fn agrees_with_direct_and_has_small_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..60 {
            let m = rng.gen_range(1..=15);
            let n = rng.gen_range(m..=30);
            let (a, d, b) = random_instance(&mut rng, m, n);
            let basis = prepare_woodbury(&a).unwrap();
            let w = solve_woodbury(&basis, &a, &d, &b).unwrap();
            let direct = solve_direct(&a, &d, &b).unwrap();
            let err = w
                .iter()
                .zip(&direct)
                .fold(0.0f64, |acc, (p, q)| acc.max((p - q).abs()));
            assert!(err <= 1e-8 * (1.0 + linalg::norm_inf(&direct)), "{err}");

            let adat = linalg::scaled_gram(&a, &d).unwrap();
            let r = linalg::mat_vec(&adat, &w).unwrap();
            let resid = r
                .iter()
                .zip(&b)
                .fold(0.0f64, |acc, (p, q)| acc.max((p - q).abs()));
            assert!(resid <= 1e-8 * (1.0 + linalg::norm_inf(&b)), "{resid}");
        }
    }

    #[test]
    fn masking_to_one_matches_unmasked_run() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let (a, mut d, b) = random_instance(&mut rng, 5, 12);
            for entry in d.iter_mut() {
                if rng.gen_bool(0.4) {
                    *entry = 1.0;
                }
            }
            let basis = prepare_woodbury(&a).unwrap();
            let masked = run_cascade(&basis, &a, &d, &b).unwrap().into_solution();
            // Replay without the skip path: a unit entry gives v = 0, so the
            // full update subtracts exact zeros.
            let mut ws = init_workspace(&basis, &b).unwrap();
            for l in 1..=ws.n {
                let scale = d[l - 1] - 1.0;
                for (v, &x) in ws.v.iter_mut().zip(a.col(l - 1)) {
                    *v = x * scale;
                }
                let m = ws.m;
                for k in l - 1..=ws.n {
                    ws.inner[k] = linalg::dot_tree_unchecked(&ws.v, &ws.cols[k * m..(k + 1) * m]);
                }
                let denom = 1.0 + ws.inner[l - 1];
                let (head, tail) = ws.cols.split_at_mut(l * m);
                let pivot = &head[(l - 1) * m..];
                for (off, col) in tail.chunks_exact_mut(m).enumerate() {
                    update_column(col, pivot, ws.inner[l + off] / denom);
                }
                ws.step = l;
            }
            let full = ws.into_solution();
            let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&masked), bits(&full));
        }
    }

    #[test]
    fn frozen_prefix() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (a, d, b) = random_instance(&mut rng, 4, 10);
        let basis = prepare_woodbury(&a).unwrap();
        let mut ws = init_workspace(&basis, &b).unwrap();
        let mut snapshots: Vec<Vec<f64>> = Vec::new();
        for l in 1..=10 {
            rank_one_step(&mut ws, &a, &d, l).unwrap();
            snapshots.push(ws.column(l - 1).to_vec());
            for (k, snap) in snapshots.iter().enumerate() {
                assert_eq!(ws.column(k), snap.as_slice(), "column {k} after step {l}");
            }
        }
    }

    #[test]
    fn replay_matches_fresh_cascade_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let m = rng.gen_range(1..=8);
            let n = rng.gen_range(m..=16);
            let (a, mut d, b) = random_instance(&mut rng, m, n);
            d[0] = 1.0;
            let basis = prepare_woodbury(&a).unwrap();
            let ws = run_cascade(&basis, &a, &d, &b).unwrap();
            let other: Vec<f64> = (0..m).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let replayed = ws.replay(&basis, &a, &d, &other).unwrap();
            let fresh = run_cascade(&basis, &a, &d, &other).unwrap().into_solution();
            let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&replayed), bits(&fresh));
        }
    }

    #[test]
    fn replay_needs_finished_cascade() {
        let a = mat(&[&[1.0, 2.0]]);
        let basis = prepare_woodbury(&a).unwrap();
        let ws = init_workspace(&basis, &[1.0]).unwrap();
        assert!(matches!(
            ws.replay(&basis, &a, &[2.0, 2.0], &[1.0]),
            Err(Error::StepOutOfOrder {
                current: 0,
                requested: 2
            })
        ));
    }

    #[test]
    fn workspace_footprint() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (a, d, b) = random_instance(&mut rng, 7, 13);
        let basis = prepare_woodbury(&a).unwrap();
        let mut ws = init_workspace(&basis, &b).unwrap();
        let (m, n) = (7, 13);
        let budget = m * (n + 1) + (n + 1) + m;
        assert_eq!(ws.scalar_count(), budget);
        for l in 1..=n {
            rank_one_step(&mut ws, &a, &d, l).unwrap();
            assert_eq!(ws.scalar_count(), budget);
            assert!(ws.cols.capacity() <= m * (n + 1));
        }
    }
}
