//! Dense column-contiguous kernels.
//!
//! Every matrix stores its columns back to back: element `(i, j)` lives at
//! `j * rows + i`. Walking down a column therefore touches one contiguous
//! address range, which is the access pattern all the column sweeps in this
//! crate are built around.
//!
//! Inner products go through [`dot_tree`], a pairwise reduction whose shape
//! depends only on the vector length. Any two callers that reduce the same
//! data get the same bits back, no matter how the surrounding work is split
//! between threads.

use std::ops::Range;

use crate::error::{Error, Result};

/// Dense `rows x cols` matrix with column-contiguous storage.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    /// Builds a matrix from column-contiguous data.
    pub fn from_col_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} entries supplied for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    /// Builds a matrix from a list of rows. All rows must have equal length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut m = Self::zeros(nrows, ncols);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != ncols {
                return Err(Error::DimensionMismatch(format!(
                    "row {i} has {} entries, expected {ncols}",
                    row.len()
                )));
            }
            for (j, &value) in row.iter().enumerate() {
                m.set(i, j, value);
            }
        }
        Ok(m)
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m.set(i, i, v);
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[j * self.rows + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[j * self.rows + i] = value;
    }

    /// Storage range occupied by column `j`.
    #[inline]
    pub fn column_range(&self, j: usize) -> Range<usize> {
        j * self.rows..(j + 1) * self.rows
    }

    #[inline]
    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[self.column_range(j)]
    }

    #[inline]
    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        let range = self.column_range(j);
        &mut self.data[range]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.cols).map(|j| self.get(i, j)).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = Self::zeros(self.cols, self.rows);
        for j in 0..self.cols {
            for i in 0..self.rows {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    /// Plain triple-loop product. Used for small verification matrices.
    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for j in 0..other.cols {
            for k in 0..self.cols {
                let b = other.get(k, j);
                if b == 0.0 {
                    continue;
                }
                let a_col = self.col(k);
                let out_col = out.col_mut(j);
                for (o, &a) in out_col.iter_mut().zip(a_col) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// Largest absolute entry, zero for an empty matrix.
    pub fn max_abs(&self) -> f64 {
        norm_inf(&self.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Lower-triangular factor with a strictly positive diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerTriangular {
    factor: DenseMatrix,
}

impl LowerTriangular {
    /// Wraps a square matrix that is already lower triangular with a positive
    /// diagonal.
    pub fn new(factor: DenseMatrix) -> Result<Self> {
        let n = factor.rows();
        if factor.cols() != n {
            return Err(Error::DimensionMismatch(format!(
                "triangular factor must be square, got {}x{}",
                n,
                factor.cols()
            )));
        }
        for j in 0..n {
            let pivot = factor.get(j, j);
            if !(pivot > 0.0) {
                return Err(Error::NotPositiveDefinite { index: j, pivot });
            }
            for i in 0..j {
                if factor.get(i, j) != 0.0 {
                    return Err(Error::DimensionMismatch(format!(
                        "entry ({i},{j}) above the diagonal is nonzero"
                    )));
                }
            }
        }
        Ok(LowerTriangular { factor })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.factor.rows()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.factor.get(i, j)
    }

    pub fn as_matrix(&self) -> &DenseMatrix {
        &self.factor
    }

    /// Reassembles `L * L^T`.
    pub fn reconstruct(&self) -> DenseMatrix {
        self.factor
            .matmul(&self.factor.transpose())
            .expect("square factor")
    }
}

/// Pairwise tree reduction of `sum(u[i] * v[i])`.
///
/// The length is padded with zeros to the next power of two `p`. The first
/// level adds product `i` to product `i + p/2` as it is loaded; each further
/// level folds the upper half of the partial sums onto the lower half until
/// one value remains.
pub fn dot_tree(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch(format!(
            "dot product of lengths {} and {}",
            u.len(),
            v.len()
        )));
    }
    Ok(dot_tree_unchecked(u, v))
}

#[inline]
pub(crate) fn dot_tree_unchecked(u: &[f64], v: &[f64]) -> f64 {
    debug_assert_eq!(u.len(), v.len());
    let len = u.len();
    match len {
        0 => 0.0,
        1 => u[0] * v[0],
        _ => {
            let half = len.next_power_of_two() / 2;
            fold(u, v, half, 0, 1)
        }
    }
}

/// Partial sum held at slot `i` once the reduction has narrowed to `width`
/// slots. Slot `i` at width `w` covers indices `i, i + w, i + 2w, ...`.
fn fold(u: &[f64], v: &[f64], half: usize, i: usize, width: usize) -> f64 {
    let len = u.len();
    if i >= len {
        return 0.0;
    }
    if width == half {
        let lo = u[i] * v[i];
        let j = i + half;
        let hi = if j < len { u[j] * v[j] } else { 0.0 };
        lo + hi
    } else {
        let w2 = width * 2;
        fold(u, v, half, i, w2) + fold(u, v, half, i + width, w2)
    }
}

/// Cholesky factorization `M = L L^T` of a symmetric positive definite matrix.
///
/// Pivots at or below `1e-12 * max(diag(M))` are reported as
/// [`Error::NotPositiveDefinite`]; applied to `A A^T` this flags a rank
/// deficient `A`.
pub fn cholesky_factor(m: &DenseMatrix) -> Result<LowerTriangular> {
    let n = m.rows();
    if m.cols() != n {
        return Err(Error::DimensionMismatch(format!(
            "cholesky needs a square matrix, got {}x{}",
            n,
            m.cols()
        )));
    }
    if !m.is_finite() {
        return Err(Error::NonFiniteEntry("matrix"));
    }
    let sym_tol = 1e-12 * m.max_abs();
    for j in 0..n {
        for i in 0..j {
            let diff = (m.get(i, j) - m.get(j, i)).abs();
            if diff > sym_tol {
                return Err(Error::NotSymmetric {
                    row: i,
                    col: j,
                    diff,
                });
            }
        }
    }

    let max_diag = (0..n)
        .map(|i| m.get(i, i))
        .fold(f64::NEG_INFINITY, f64::max);
    let eps_spd = 1e-12 * max_diag.max(0.0);

    let mut l = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let mut pivot = m.get(j, j);
        for k in 0..j {
            let ljk = l.get(j, k);
            pivot -= ljk * ljk;
        }
        if !(pivot > eps_spd) {
            return Err(Error::NotPositiveDefinite { index: j, pivot });
        }
        let ljj = pivot.sqrt();
        l.set(j, j, ljj);
        for i in j + 1..n {
            let mut acc = m.get(i, j);
            for k in 0..j {
                acc -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, acc / ljj);
        }
    }
    Ok(LowerTriangular { factor: l })
}

/// Solves `(L L^T) x = b` by forward then back substitution.
pub fn cholesky_solve(l: &LowerTriangular, b: &[f64]) -> Result<Vec<f64>> {
    let n = l.dim();
    if b.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "factor of dimension {n} with right-hand side of length {}",
            b.len()
        )));
    }
    let f = l.as_matrix();
    let mut x = b.to_vec();
    // L z = b, column oriented
    for j in 0..n {
        let col = f.col(j);
        x[j] /= col[j];
        let xj = x[j];
        for i in j + 1..n {
            x[i] -= col[i] * xj;
        }
    }
    // L^T x = z, row j of L^T is column j of L
    for j in (0..n).rev() {
        let col = f.col(j);
        let mut acc = x[j];
        for i in j + 1..n {
            acc -= col[i] * x[i];
        }
        x[j] = acc / col[j];
    }
    Ok(x)
}

/// `A A^T`, exactly symmetric.
pub fn gram(a: &DenseMatrix) -> DenseMatrix {
    weighted_gram(a, None)
}

/// `A diag(d) A^T`, exactly symmetric. Every `d` entry must be positive.
pub fn scaled_gram(a: &DenseMatrix, d: &[f64]) -> Result<DenseMatrix> {
    if d.len() != a.cols() {
        return Err(Error::DimensionMismatch(format!(
            "scaling of length {} for a matrix with {} columns",
            d.len(),
            a.cols()
        )));
    }
    check_positive(d)?;
    Ok(weighted_gram(a, Some(d)))
}

pub(crate) fn check_positive(d: &[f64]) -> Result<()> {
    match d.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
        Some(index) => Err(Error::NonPositiveScaling {
            index,
            value: d[index],
        }),
        None => Ok(()),
    }
}

fn weighted_gram(a: &DenseMatrix, d: Option<&[f64]>) -> DenseMatrix {
    let m = a.rows();
    let mut g = DenseMatrix::zeros(m, m);
    // upper triangle, one column of A at a time
    for k in 0..a.cols() {
        let col = a.col(k);
        let w = d.map_or(1.0, |d| d[k]);
        for j in 0..m {
            let ajw = col[j] * w;
            if ajw == 0.0 {
                continue;
            }
            let gcol = g.col_mut(j);
            for i in 0..=j {
                gcol[i] += col[i] * ajw;
            }
        }
    }
    for j in 0..m {
        for i in 0..j {
            let upper = g.get(i, j);
            g.set(j, i, upper);
        }
    }
    g
}

/// `A x`, each row reduced with [`dot_tree`].
pub fn mat_vec(a: &DenseMatrix, x: &[f64]) -> Result<Vec<f64>> {
    rows_apply(a, x, dot_tree_unchecked)
}

/// `A^T y`, each column reduced with [`dot_tree`].
pub fn mat_t_vec(a: &DenseMatrix, y: &[f64]) -> Result<Vec<f64>> {
    cols_apply(a, y, dot_tree_unchecked)
}

/// Dot product carried in twice the working precision (error-free product
/// and sum transformations), rounded once at the end.
///
/// ```
/// use adascale::linalg::dot_compensated;
/// assert_eq!(dot_compensated(&[1e16, 1.0, -1e16], &[1.0, 1.0, 1.0]), 1.0);
/// ```
pub fn dot_compensated(u: &[f64], v: &[f64]) -> f64 {
    let mut acc = Dot2::default();
    for (x, y) in u.iter().zip(v) {
        acc.add(*x, *y);
    }
    acc.value()
}

/// [`dot_compensated`] of `u` with the unevaluated sum `hi + lo`.
pub fn dot_compensated_split(u: &[f64], hi: &[f64], lo: &[f64]) -> f64 {
    let mut acc = Dot2::default();
    for ((x, h), l) in u.iter().zip(hi).zip(lo) {
        acc.add(*x, *h);
        acc.add(*x, *l);
    }
    acc.value()
}

#[derive(Default)]
struct Dot2 {
    sum: f64,
    err: f64,
}

impl Dot2 {
    fn add(&mut self, x: f64, y: f64) {
        let p = x * y;
        let p_err = x.mul_add(y, -p);
        let t = self.sum + p;
        let z = t - self.sum;
        self.err += (self.sum - (t - z)) + (p - z) + p_err;
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.err
    }
}

/// `A x` with [`dot_compensated`] rows.
pub fn mat_vec_compensated(a: &DenseMatrix, x: &[f64]) -> Result<Vec<f64>> {
    rows_apply(a, x, dot_compensated)
}

/// `A^T y` with [`dot_compensated`] columns.
pub fn mat_t_vec_compensated(a: &DenseMatrix, y: &[f64]) -> Result<Vec<f64>> {
    cols_apply(a, y, dot_compensated)
}

fn rows_apply(a: &DenseMatrix, x: &[f64], dot: fn(&[f64], &[f64]) -> f64) -> Result<Vec<f64>> {
    if x.len() != a.cols() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} matrix times vector of length {}",
            a.rows(),
            a.cols(),
            x.len()
        )));
    }
    let mut row = vec![0.0; a.cols()];
    Ok((0..a.rows())
        .map(|i| {
            for (j, r) in row.iter_mut().enumerate() {
                *r = a.get(i, j);
            }
            dot(&row, x)
        })
        .collect())
}

fn cols_apply(a: &DenseMatrix, y: &[f64], dot: fn(&[f64], &[f64]) -> f64) -> Result<Vec<f64>> {
    if y.len() != a.rows() {
        return Err(Error::DimensionMismatch(format!(
            "transpose of {}x{} matrix times vector of length {}",
            a.rows(),
            a.cols(),
            y.len()
        )));
    }
    Ok((0..a.cols()).map(|j| dot(a.col(j), y)).collect())
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}
