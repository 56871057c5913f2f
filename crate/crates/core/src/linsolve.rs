//! Linear solvers for the per-step system.
//!
//! `gmres` is restarted GMRES with optional right Jacobi preconditioning,
//! so the convergence test is always on the true residual `||b - A x||`.
//! `dense_solve` is an LU oracle for small systems. [`SparseLu`] factors a
//! sparse matrix once so that repeated solves with the same operator cost
//! only two triangular sweeps.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sprs::CsMat;
use thiserror::Error;

pub const DENSE_SOLVE_LIMIT: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Preconditioner {
    None,
    Jacobi,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub rel_tol: f64,
    pub restart: usize,
    pub max_outer: usize,
    pub preconditioner: Preconditioner,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            restart: 30,
            max_outer: 200,
            preconditioner: Preconditioner::Jacobi,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.rel_tol > 0.0 && self.rel_tol.is_finite()) {
            return Err(SolverError::InvalidConfig(format!(
                "rel_tol must be positive, got {}",
                self.rel_tol
            )));
        }
        if self.restart < 2 {
            return Err(SolverError::InvalidConfig(format!(
                "restart must be at least 2, got {}",
                self.restart
            )));
        }
        if self.max_outer == 0 {
            return Err(SolverError::InvalidConfig("max_outer must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    /// Total Arnoldi steps (matrix-vector products inside cycles).
    pub iterations: usize,
    pub outer_cycles: usize,
    pub rhs_norm: f64,
    /// True residual norm after the last cycle.
    pub residual_norm: f64,
    /// True residual norm before the first cycle and after every cycle.
    pub residual_history: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("GMRES did not converge after {cycles} cycles (residual {residual:e}, target {target:e})")]
    NonConvergence {
        cycles: usize,
        residual: f64,
        target: f64,
        best: Vec<f64>,
    },
    #[error("GMRES breakdown at iteration {iteration}: singular Hessenberg system")]
    Breakdown { iteration: usize },
    #[error("singular matrix: pivot {pivot:e} in column {column}")]
    SingularMatrix { column: usize, pivot: f64 },
    #[error("dimension mismatch: matrix {rows}x{cols}, vector {len}")]
    Dimension { rows: usize, cols: usize, len: usize },
    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),
    #[error("dense solve limited to {DENSE_SOLVE_LIMIT} unknowns, got {0}")]
    TooLarge(usize),
    #[error("invalid solver config: {0}")]
    InvalidConfig(String),
    #[error("sparse LU factorization failed: {0}")]
    Factorization(String),
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y = A x` for a CSR matrix.
pub fn matvec(a: &CsMat<f64>, x: &[f64], y: &mut [f64]) {
    debug_assert!(a.is_csr());
    let indptr = a.indptr();
    let idx = a.indices();
    let data = a.data();
    for (r, yr) in y.iter_mut().enumerate() {
        let range = indptr.outer_inds_sz(r);
        let mut acc = 0.0;
        for k in range {
            acc += data[k] * x[idx[k]];
        }
        *yr = acc;
    }
}

pub fn residual(a: &CsMat<f64>, x: &[f64], b: &[f64]) -> Vec<f64> {
    let mut r = vec![0.0; b.len()];
    matvec(a, x, &mut r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    r
}

fn inverse_diagonal(a: &CsMat<f64>) -> Vec<f64> {
    (0..a.rows())
        .map(|r| {
            let d = a.get(r, r).copied().unwrap_or(0.0);
            if d != 0.0 && d.is_finite() {
                1.0 / d
            } else {
                1.0
            }
        })
        .collect()
}

/// Restarted GMRES(m) with modified Gram-Schmidt and Givens rotations.
pub fn gmres(
    a: &CsMat<f64>,
    b: &[f64],
    x0: &[f64],
    cfg: &SolverConfig,
) -> Result<(Vec<f64>, SolveStats), SolverError> {
    cfg.validate()?;
    let n = b.len();
    if a.rows() != n || a.cols() != n || x0.len() != n {
        return Err(SolverError::Dimension {
            rows: a.rows(),
            cols: a.cols(),
            len: if x0.len() != n { x0.len() } else { n },
        });
    }
    if !b.iter().all(|v| v.is_finite()) {
        return Err(SolverError::NonFinite("right-hand side"));
    }
    let a = if a.is_csr() { a.clone() } else { a.to_csr() };
    let a = &a;

    let bnorm = norm(b);
    let mut stats = SolveStats {
        rhs_norm: bnorm,
        ..Default::default()
    };
    if bnorm == 0.0 {
        stats.residual_history.push(0.0);
        return Ok((vec![0.0; n], stats));
    }
    let target = cfg.rel_tol * bnorm;
    let minv = match cfg.preconditioner {
        Preconditioner::Jacobi => Some(inverse_diagonal(a)),
        Preconditioner::None => None,
    };
    let precondition = |v: &[f64], out: &mut [f64]| match &minv {
        Some(d) => {
            for ((o, vi), di) in out.iter_mut().zip(v).zip(d) {
                *o = vi * di;
            }
        }
        None => out.copy_from_slice(v),
    };

    let m = cfg.restart.min(n.max(1));
    let mut x = x0.to_vec();
    let mut r = residual(a, &x, b);
    let mut beta = norm(&r);
    stats.residual_history.push(beta);
    stats.residual_norm = beta;
    if beta <= target {
        return Ok((x, stats));
    }

    let mut basis: Vec<Vec<f64>> = vec![vec![0.0; n]; m + 1];
    let mut hess = vec![vec![0.0; m]; m + 1];
    let mut cs = vec![0.0; m];
    let mut sn = vec![0.0; m];
    let mut g = vec![0.0; m + 1];
    let mut z = vec![0.0; n];
    let mut w = vec![0.0; n];

    for _cycle in 0..cfg.max_outer {
        stats.outer_cycles += 1;
        for (v, ri) in basis[0].iter_mut().zip(&r) {
            *v = ri / beta;
        }
        g.iter_mut().for_each(|e| *e = 0.0);
        g[0] = beta;
        let mut k = 0;
        for j in 0..m {
            precondition(&basis[j], &mut z);
            matvec(a, &z, &mut w);
            let wnorm0 = norm(&w);
            for i in 0..=j {
                let hij = dot(&w, &basis[i]);
                hess[i][j] = hij;
                for (wi, vi) in w.iter_mut().zip(&basis[i]) {
                    *wi -= hij * vi;
                }
            }
            let hnext = norm(&w);
            for i in 0..j {
                let t = cs[i] * hess[i][j] + sn[i] * hess[i + 1][j];
                hess[i + 1][j] = -sn[i] * hess[i][j] + cs[i] * hess[i + 1][j];
                hess[i][j] = t;
            }
            let denom = hess[j][j].hypot(hnext);
            if denom == 0.0 {
                return Err(SolverError::Breakdown {
                    iteration: stats.iterations,
                });
            }
            cs[j] = hess[j][j] / denom;
            sn[j] = hnext / denom;
            hess[j][j] = denom;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];
            stats.iterations += 1;
            k = j + 1;
            let happy = hnext <= 1e-14 * wnorm0.max(f64::MIN_POSITIVE);
            if g[j + 1].abs() <= target || happy {
                break;
            }
            for (v, wi) in basis[j + 1].iter_mut().zip(&w) {
                *v = wi / hnext;
            }
        }

        // back substitution on the rotated Hessenberg matrix
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for l in i + 1..k {
                s -= hess[i][l] * y[l];
            }
            y[i] = s / hess[i][i];
        }
        let mut update = vec![0.0; n];
        for (i, yi) in y.iter().enumerate() {
            for (u, v) in update.iter_mut().zip(&basis[i]) {
                *u += yi * v;
            }
        }
        precondition(&update, &mut z);
        for (xi, zi) in x.iter_mut().zip(&z) {
            *xi += zi;
        }
        r = residual(a, &x, b);
        beta = norm(&r);
        stats.residual_history.push(beta);
        stats.residual_norm = beta;
        if !beta.is_finite() {
            return Err(SolverError::NonFinite("GMRES iterate"));
        }
        if beta <= target {
            return Ok((x, stats));
        }
    }
    Err(SolverError::NonConvergence {
        cycles: stats.outer_cycles,
        residual: beta,
        target,
        best: x,
    })
}

/// LU with partial pivoting. Pivots below `1e-14 max|A|` are treated as singular.
pub fn dense_solve(a: &DMatrix<f64>, b: &[f64]) -> Result<Vec<f64>, SolverError> {
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(SolverError::Dimension {
            rows: n,
            cols: a.ncols(),
            len: b.len(),
        });
    }
    if n > DENSE_SOLVE_LIMIT {
        return Err(SolverError::TooLarge(n));
    }
    if !a.iter().all(|v| v.is_finite()) {
        return Err(SolverError::NonFinite("matrix"));
    }
    let amax = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let lu = a.clone().lu();
    let u = lu.u();
    for c in 0..n {
        let pivot = u[(c, c)];
        if pivot.abs() <= 1e-14 * amax || amax == 0.0 {
            return Err(SolverError::SingularMatrix { column: c, pivot });
        }
    }
    let rhs = nalgebra::DVector::from_column_slice(b);
    let x = lu.solve(&rhs).ok_or(SolverError::SingularMatrix {
        column: 0,
        pivot: 0.0,
    })?;
    Ok(x.iter().copied().collect())
}

/// Dense copy of a sparse matrix.
pub fn to_dense(a: &CsMat<f64>) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(a.rows(), a.cols());
    for (v, (r, c)) in a.iter() {
        d[(r, c)] += *v;
    }
    d
}

/// Sparse LU factorization (fill-reducing column ordering, partial pivoting).
#[derive(Debug, Clone)]
pub struct SparseLu {
    n: usize,
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
}

impl SparseLu {
    pub fn factor(a: &CsMat<f64>) -> Result<Self, SolverError> {
        if a.rows() != a.cols() {
            return Err(SolverError::Dimension {
                rows: a.rows(),
                cols: a.cols(),
                len: a.cols(),
            });
        }
        if a.data().iter().any(|v| !v.is_finite()) {
            return Err(SolverError::NonFinite("matrix"));
        }
        let triplets: Vec<_> = a
            .iter()
            .map(|(&v, (r, c))| faer::sparse::Triplet::new(r, c, v))
            .collect();
        let mat = faer::sparse::SparseColMat::<usize, f64>::try_new_from_triplets(a.rows(), a.cols(), &triplets)
            .map_err(|e| SolverError::Factorization(format!("{e:?}")))?;
        let lu = mat
            .sp_lu()
            .map_err(|e| SolverError::Factorization(format!("{e:?}")))?;
        Ok(Self { n: a.rows(), lu })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, SolverError> {
        use faer::linalg::solvers::Solve;
        if b.len() != self.n {
            return Err(SolverError::Dimension {
                rows: self.n,
                cols: self.n,
                len: b.len(),
            });
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::NonFinite("right-hand side"));
        }
        let rhs = faer::Col::from_fn(self.n, |i| b[i]);
        let x = self.lu.solve(&rhs);
        let out: Vec<f64> = (0..self.n).map(|i| x[i]).collect();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::Factorization("non-finite solution, matrix is singular".into()));
        }
        Ok(out)
    }
}
