//! Oracles shared by the integration suites. Nothing in this file calls into
//! the solver paths it is used to check; `walk` drives the iteration step by
//! step so suites can inspect every direction.
#![allow(dead_code)]

pub mod walk;

use adascale::model::StandardFormLp;
use minilp::{ComparisonOp, OptimizationDirection, Problem};

/// Optimal objective from an independent simplex implementation.
pub fn reference_objective(lp: &StandardFormLp) -> f64 {
    let mut problem = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<_> = lp
        .c()
        .iter()
        .map(|&c| problem.add_var(c, (0.0, f64::INFINITY)))
        .collect();
    for i in 0..lp.m() {
        let row: Vec<_> = vars
            .iter()
            .enumerate()
            .map(|(j, &v)| (v, lp.a().get(i, j)))
            .collect();
        problem.add_constraint(row.as_slice(), ComparisonOp::Eq, lp.b()[i]);
    }
    problem.solve().expect("reference solve").objective()
}

/// Gaussian elimination with partial pivoting on a dense row-major system.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        let pivot = a[col].clone();
        for r in col + 1..n {
            let f = a[r][col] / pivot[col];
            for (v, p) in a[r].iter_mut().zip(&pivot).skip(col) {
                *v -= f * p;
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let tail: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - tail) / a[r][r];
    }
    Some(x)
}

/// Minimum over all basic feasible solutions, by enumerating every choice of
/// `m` basic columns. Returns the optimal vertex and its objective.
pub fn enumerate_vertices(lp: &StandardFormLp) -> Option<(Vec<f64>, f64)> {
    let (m, n) = (lp.m(), lp.n());
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut basis: Vec<usize> = (0..m).collect();
    loop {
        let sys: Vec<Vec<f64>> = (0..m)
            .map(|i| basis.iter().map(|&j| lp.a().get(i, j)).collect())
            .collect();
        if let Some(xb) = gauss_solve(sys, lp.b().to_vec()) {
            if xb.iter().all(|&v| v >= -1e-10) {
                let mut x = vec![0.0; n];
                for (&j, &v) in basis.iter().zip(&xb) {
                    x[j] = v.max(0.0);
                }
                let obj = lp.objective(&x);
                if best.as_ref().is_none_or(|(_, o)| obj < *o) {
                    best = Some((x, obj));
                }
            }
        }
        // next combination
        let mut i = m;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if basis[i] < n - m + i {
                break;
            }
        }
        basis[i] += 1;
        for k in i + 1..m {
            basis[k] = basis[k - 1] + 1;
        }
    }
}
