//! Standard-form problems `min c^T x  s.t.  A x = b, x >= 0`, interior points,
//! a seeded instance generator and the JSON problem file format.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, DenseMatrix};

/// A validated standard-form LP. `A` is `m x n` with `1 <= m <= n` and full
/// row rank; all data is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardFormLp {
    a: DenseMatrix,
    b: Vec<f64>,
    c: Vec<f64>,
}

impl StandardFormLp {
    pub fn new(a: DenseMatrix, b: Vec<f64>, c: Vec<f64>) -> Result<Self> {
        let lp = StandardFormLp { a, b, c };
        lp.validate()?;
        Ok(lp)
    }

    /// Re-checks shape, finiteness and full row rank.
    pub fn validate(&self) -> Result<()> {
        let (m, n) = (self.a.rows(), self.a.cols());
        if m == 0 {
            return Err(Error::DimensionMismatch(
                "at least one constraint is required".into(),
            ));
        }
        if n < m {
            return Err(Error::DimensionMismatch(format!(
                "{m} constraints but only {n} variables"
            )));
        }
        if self.b.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "b has length {}, expected {m}",
                self.b.len()
            )));
        }
        if self.c.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "c has length {}, expected {n}",
                self.c.len()
            )));
        }
        if !self.a.is_finite() {
            return Err(Error::NonFiniteEntry("A"));
        }
        if !self.b.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteEntry("b"));
        }
        if !self.c.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteEntry("c"));
        }
        linalg::cholesky_factor(&linalg::gram(&self.a)).map_err(|_| Error::RankDeficient)?;
        Ok(())
    }

    #[inline]
    pub fn a(&self) -> &DenseMatrix {
        &self.a
    }

    #[inline]
    pub fn b(&self) -> &[f64] {
        &self.b
    }

    #[inline]
    pub fn c(&self) -> &[f64] {
        &self.c
    }

    /// Number of equality constraints.
    #[inline]
    pub fn m(&self) -> usize {
        self.a.rows()
    }

    /// Number of variables.
    #[inline]
    pub fn n(&self) -> usize {
        self.a.cols()
    }

    /// Feasibility tolerance `1e-8 * (1 + |b|_inf)`.
    pub fn feas_tol(&self) -> f64 {
        1e-8 * (1.0 + linalg::norm_inf(&self.b))
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.c.iter().zip(x).map(|(c, x)| c * x).sum()
    }

    pub fn dual_objective(&self, y: &[f64]) -> f64 {
        self.b.iter().zip(y).map(|(b, y)| b * y).sum()
    }

    /// `|A x - b|_inf`.
    pub fn primal_infeasibility(&self, x: &[f64]) -> f64 {
        let ax = linalg::mat_vec(&self.a, x).expect("x has length n");
        ax.iter()
            .zip(&self.b)
            .fold(0.0, |acc, (p, q)| acc.max((p - q).abs()))
    }

    /// `|s - (c - A^T y)|_inf`.
    pub fn dual_infeasibility(&self, y: &[f64], s: &[f64]) -> f64 {
        let aty = linalg::mat_t_vec(&self.a, y).expect("y has length m");
        s.iter()
            .zip(self.c.iter().zip(&aty))
            .fold(0.0, |acc, (s, (c, t))| acc.max((s - (c - t)).abs()))
    }

    /// Checks that `point` has matching lengths, is strictly interior and
    /// satisfies both feasibility systems to [`feas_tol`](Self::feas_tol).
    pub fn check_start(&self, point: &InteriorPoint) -> Result<()> {
        point.check_dims(self.m(), self.n())?;
        point.check_interior()?;
        let tol = self.feas_tol();
        let primal = self.primal_infeasibility(&point.x);
        if primal > tol {
            return Err(Error::InfeasibleStart(format!(
                "|Ax - b| = {primal:e} exceeds {tol:e}"
            )));
        }
        let dual = self.dual_infeasibility(&point.y, &point.s);
        if dual > tol {
            return Err(Error::InfeasibleStart(format!(
                "|s - (c - A^T y)| = {dual:e} exceeds {tol:e}"
            )));
        }
        Ok(())
    }
}

/// Primal-dual iterate `(x, y, s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteriorPoint {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub s: Vec<f64>,
}

impl InteriorPoint {
    pub fn new(x: Vec<f64>, y: Vec<f64>, s: Vec<f64>) -> Self {
        InteriorPoint { x, y, s }
    }

    pub fn is_interior(&self) -> bool {
        self.x
            .iter()
            .chain(&self.s)
            .all(|&v| v > 0.0 && v.is_finite())
    }

    pub fn check_interior(&self) -> Result<()> {
        if let Some(i) = self.x.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::NotInterior(format!("x[{i}] = {}", self.x[i])));
        }
        if let Some(i) = self.s.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::NotInterior(format!("s[{i}] = {}", self.s[i])));
        }
        Ok(())
    }

    pub(crate) fn check_dims(&self, m: usize, n: usize) -> Result<()> {
        if self.x.len() != n || self.s.len() != n || self.y.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "point has |x|={}, |y|={}, |s|={}; problem is {m}x{n}",
                self.x.len(),
                self.y.len(),
                self.s.len()
            )));
        }
        Ok(())
    }
}

const MAX_GENERATION_ATTEMPTS: usize = 100;

/// Draws a random `m x n` problem together with a strictly feasible point.
///
/// `A` has entries uniform in `[-1, 1]`, `x` and `s` uniform in `[0.5, 2]`,
/// `y` uniform in `[-1, 1]`; then `b = A x` and `c = A^T y + s`. The output
/// is a pure function of `(m, n, seed)`.
pub fn gen_random_feasible(
    m: usize,
    n: usize,
    seed: u64,
) -> Result<(StandardFormLp, InteriorPoint)> {
    if m == 0 || m >= n {
        return Err(Error::InvalidOption(format!(
            "generator needs 1 <= m < n, got m={m}, n={n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = (0..MAX_GENERATION_ATTEMPTS)
        .map(|_| {
            DenseMatrix::from_col_major(
                m,
                n,
                (0..m * n).map(|_| rng.gen_range(-1.0..=1.0)).collect(),
            )
            .expect("sized buffer")
        })
        .find(|a| linalg::cholesky_factor(&linalg::gram(a)).is_ok())
        .ok_or(Error::GenerationFailed(MAX_GENERATION_ATTEMPTS))?;

    let x: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..=2.0)).collect();
    let s: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..=2.0)).collect();
    let y: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    let b = linalg::mat_vec(&a, &x)?;
    let aty = linalg::mat_t_vec(&a, &y)?;
    let c = aty.iter().zip(&s).map(|(t, s)| t + s).collect();
    let lp = StandardFormLp::new(a, b, c)?;
    Ok((lp, InteriorPoint::new(x, y, s)))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemFile {
    m: usize,
    n: usize,
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    c: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    start: Option<InteriorPoint>,
}

/// Parses a problem file. The optional `start` block is shape-checked against
/// the problem but not checked for interiority or feasibility.
pub fn parse_problem(text: &[u8]) -> Result<(StandardFormLp, Option<InteriorPoint>)> {
    let file: ProblemFile =
        serde_json::from_slice(text).map_err(|e| Error::Schema(e.to_string()))?;
    if file.a.len() != file.m {
        return Err(Error::Schema(format!(
            "field \"A\" has {} rows but m = {}",
            file.a.len(),
            file.m
        )));
    }
    if let Some(i) = file.a.iter().position(|row| row.len() != file.n) {
        return Err(Error::Schema(format!(
            "field \"A\" row {i} has {} entries but n = {}",
            file.a[i].len(),
            file.n
        )));
    }
    if file.b.len() != file.m {
        return Err(Error::Schema(format!(
            "field \"b\" has {} entries but m = {}",
            file.b.len(),
            file.m
        )));
    }
    if file.c.len() != file.n {
        return Err(Error::Schema(format!(
            "field \"c\" has {} entries but n = {}",
            file.c.len(),
            file.n
        )));
    }
    let a = if file.m == 0 {
        DenseMatrix::zeros(0, file.n)
    } else {
        DenseMatrix::from_rows(&file.a)?
    };
    let lp = StandardFormLp::new(a, file.b, file.c)?;
    if let Some(start) = &file.start {
        start
            .check_dims(lp.m(), lp.n())
            .map_err(|e| Error::Schema(format!("field \"start\": {e}")))?;
    }
    Ok((lp, file.start))
}

/// Writes the problem (and optional start point) as JSON. Numbers use the
/// shortest decimal form that parses back to the same double.
pub fn serialize_problem(lp: &StandardFormLp, start: Option<&InteriorPoint>) -> Vec<u8> {
    let file = ProblemFile {
        m: lp.m(),
        n: lp.n(),
        a: lp.a().to_rows(),
        b: lp.b().to_vec(),
        c: lp.c().to_vec(),
        start: start.cloned(),
    };
    let mut out = serde_json::to_vec_pretty(&file).expect("finite values serialize");
    out.push(b'\n');
    out
}
