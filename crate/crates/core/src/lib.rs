//! Primal-dual affine scaling for dense standard-form linear programs.
//!
//! Each iteration reduces to the normal equations `(A D A^T) dy = A x` with
//! `D = S^{-1} X`. Two backends solve them:
//!
//! * [`normal::solve_direct`] factors `A D A^T` with Cholesky.
//! * [`normal::solve_woodbury`] factors `A A^T` once and treats every later
//!   `D` as `n` rank-one corrections, applied as column sweeps over an
//!   augmented workspace. [`parallel::SweepPool`] runs those sweeps on a
//!   worker pool with bitwise-identical results.
//!
//! ```
//! use adascale::linalg::DenseMatrix;
//! use adascale::model::{InteriorPoint, StandardFormLp};
//! use adascale::pdas::{solve_lp, SolveOptions, Status};
//!
//! // min x1 + 2 x2  s.t.  x1 + x2 = 1, x >= 0
//! let a = DenseMatrix::from_rows(&[[1.0, 1.0]])?;
//! let lp = StandardFormLp::new(a, vec![1.0], vec![1.0, 2.0])?;
//! let start = InteriorPoint::new(vec![0.5, 0.5], vec![0.0], vec![1.0, 2.0]);
//!
//! let out = solve_lp(&lp, &start, &SolveOptions::default())?;
//! assert_eq!(out.status, Status::Optimal);
//! assert!((lp.objective(&out.point.x) - 1.0).abs() < 1e-6);
//! # Ok::<(), adascale::Error>(())
//! ```

// NaN-rejecting `!(x > y)` tests and index loops over paired arrays are
// deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
mod error;
pub mod linalg;
pub mod model;
pub mod normal;
pub mod parallel;
pub mod pdas;

pub use error::{Error, Result};

// Compile and run the snippets in the guide as doc-tests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/storage.md")]
    mod storage {}
    #[doc = include_str!("../../../book/src/normal-equations.md")]
    mod normal_equations {}
    #[doc = include_str!("../../../book/src/parallel.md")]
    mod parallel {}
    #[doc = include_str!("../../../book/src/iteration.md")]
    mod iteration {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../README.md")]
    mod readme {}
}
