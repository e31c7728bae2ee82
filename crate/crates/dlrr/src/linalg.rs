//! Dense linear-algebra kernels and proximal operators shared by the solvers.
//!
//! Everything here is a pure function of its inputs and safe to call from
//! multiple threads. Matrices are dense `f64`; the problem sizes this crate
//! targets (a few thousand columns at most) do not warrant sparse storage.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Iteration cap for the iterative SVD factorization.
const SVD_MAX_ITER: usize = 1024;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("svd did not converge within {iterations} iterations")]
    SvdNonConvergence { iterations: usize },
    #[error("{op}: shape mismatch ({lhs_rows}x{lhs_cols} vs {rhs_rows}x{rhs_cols})")]
    ShapeMismatch {
        op: &'static str,
        lhs_rows: usize,
        lhs_cols: usize,
        rhs_rows: usize,
        rhs_cols: usize,
    },
    #[error("linear system too ill-conditioned: relative residual {residual:.3e}")]
    IllConditioned { residual: f64 },
    #[error("{op}: {message}")]
    Invalid { op: &'static str, message: String },
}

fn invalid(op: &'static str, message: impl Into<String>) -> LinalgError {
    LinalgError::Invalid {
        op,
        message: message.into(),
    }
}

/// Thin singular value decomposition `A = U diag(S) V^T`.
///
/// `S` is sorted non-increasing with non-negative entries; `U` and `V` have
/// orthonormal columns.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub v: DMatrix<f64>,
}

impl SvdFactors {
    /// Rebuild `U diag(S) V^T`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.u * DMatrix::from_diagonal(&self.singular_values) * self.v.transpose()
    }
}

/// Reconstruction slack (relative to the input norm) above which a
/// factorization attempt is rejected.
const SVD_CHECK_TOL: f64 = 1.0e-10;

/// Thin SVD of a dense matrix, with the reconstruction contract enforced.
///
/// The backend factorization can return inconsistent factors on exactly
/// rank-deficient inputs, so every result is verified against the input; on
/// failure the matrix is QR-reduced along its long side and the square factor
/// goes through a one-sided Jacobi factorization, which is slower but
/// unconditionally accurate. Deterministic for a given input either way.
pub fn svd(a: &DMatrix<f64>) -> Result<SvdFactors, LinalgError> {
    if a.is_empty() {
        return Err(invalid("svd", "matrix must be non-empty"));
    }
    if !a.iter().all(|v| v.is_finite()) {
        return Err(invalid("svd", "matrix has non-finite entries"));
    }
    let tol = SVD_CHECK_TOL * a.norm();
    if let Ok(factors) = raw_svd(a) {
        if (factors.reconstruct() - a).norm() <= tol {
            return Ok(factors);
        }
    }

    let factors = if a.nrows() >= a.ncols() {
        let qr = a.clone().qr();
        let small = jacobi_svd(&qr.r())?;
        SvdFactors {
            u: qr.q() * small.u,
            singular_values: small.singular_values,
            v: small.v,
        }
    } else {
        let qr = a.transpose().qr();
        let small = jacobi_svd(&qr.r())?;
        SvdFactors {
            u: small.v,
            singular_values: small.singular_values,
            v: qr.q() * small.u,
        }
    };
    if (factors.reconstruct() - a).norm() <= tol {
        Ok(factors)
    } else {
        Err(invalid("svd", "factorization failed the accuracy contract"))
    }
}

fn raw_svd(a: &DMatrix<f64>) -> Result<SvdFactors, LinalgError> {
    let factors = a
        .clone()
        .try_svd(true, true, f64::EPSILON, SVD_MAX_ITER)
        .ok_or(LinalgError::SvdNonConvergence {
            iterations: SVD_MAX_ITER,
        })?;
    Ok(SvdFactors {
        u: factors.u.expect("u requested"),
        singular_values: factors.singular_values,
        v: factors.v_t.expect("v_t requested").transpose(),
    })
}

/// One-sided Jacobi SVD of a square matrix: rotate column pairs until all
/// columns are mutually orthogonal, then read off norms as singular values.
fn jacobi_svd(a: &DMatrix<f64>) -> Result<SvdFactors, LinalgError> {
    const MAX_SWEEPS: usize = 64;
    let n = a.ncols();
    let mut w = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    // columns whose mass has collapsed to rounding residue count as zero,
    // otherwise pairs of residue columns rotate forever
    let floor = (f64::EPSILON * a.norm()).powi(2);
    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let wp = w.column(p);
                let wq = w.column(q);
                let alpha = wp.dot(&wp);
                let beta = wq.dot(&wq);
                let gamma = wp.dot(&wq);
                if alpha <= floor || beta <= floor || gamma.abs() <= 1e-15 * (alpha * beta).sqrt()
                {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..w.nrows() {
                    let wip = w[(i, p)];
                    let wiq = w[(i, q)];
                    w[(i, p)] = c * wip - s * wiq;
                    w[(i, q)] = s * wip + c * wiq;
                }
                for i in 0..n {
                    let vip = v[(i, p)];
                    let viq = v[(i, q)];
                    v[(i, p)] = c * vip - s * viq;
                    v[(i, q)] = s * vip + c * viq;
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(LinalgError::SvdNonConvergence {
            iterations: MAX_SWEEPS,
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = (0..n).map(|j| w.column(j).norm()).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).expect("finite norms"));
    let singular_values = DVector::from_fn(n, |i, _| norms[order[i]]);
    let v = DMatrix::from_fn(n, n, |i, j| v[(i, order[j])]);
    let mut u = DMatrix::zeros(w.nrows(), n);
    for (j, &src) in order.iter().enumerate() {
        let norm = norms[src];
        if norm > 0.0 {
            u.column_mut(j).copy_from(&(w.column(src) / norm));
        }
    }
    // complete exactly-zero directions to an orthonormal basis
    for j in 0..n {
        if u.column(j).norm() > 0.0 {
            continue;
        }
        for k in 0..w.nrows() {
            let mut candidate = DVector::zeros(w.nrows());
            candidate[k] = 1.0;
            for other in 0..n {
                if other != j {
                    let proj = u.column(other).dot(&candidate);
                    candidate -= u.column(other) * proj;
                }
            }
            let norm = candidate.norm();
            if norm > 0.5 {
                u.column_mut(j).copy_from(&(candidate / norm));
                break;
            }
        }
    }
    Ok(SvdFactors {
        u,
        singular_values,
        v,
    })
}

/// Largest singular value.
pub fn spectral_norm(a: &DMatrix<f64>) -> Result<f64, LinalgError> {
    let sv = singular_values_only(a)?;
    Ok(sv.max())
}

/// Sum of singular values.
pub fn nuclear_norm(a: &DMatrix<f64>) -> Result<f64, LinalgError> {
    let sv = singular_values_only(a)?;
    Ok(sv.sum())
}

fn singular_values_only(a: &DMatrix<f64>) -> Result<DVector<f64>, LinalgError> {
    Ok(svd(a)?.singular_values)
}

/// Sum of column-wise Euclidean norms (the l2,1 norm).
pub fn l21_norm(a: &DMatrix<f64>) -> f64 {
    a.column_iter().map(|c| c.norm()).sum()
}

/// Largest absolute entry (the elementwise infinity norm).
pub fn inf_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        0.0
    } else {
        a.amax()
    }
}

/// Singular value thresholding: the proximal operator of `tau * nuclear norm`.
///
/// Returns the unique minimizer of `tau*||M||_* + 0.5*||M - A||_F^2`, i.e.
/// `U diag(max(S - tau, 0)) V^T` for the SVD of `A`.
pub fn svt(a: &DMatrix<f64>, tau: f64) -> Result<DMatrix<f64>, LinalgError> {
    svt_with_nuclear_norm(a, tau).map(|(m, _)| m)
}

/// [`svt`] returning the nuclear norm of the result as well; the shrunk
/// singular values are a byproduct of the thresholding factorization.
pub fn svt_with_nuclear_norm(
    a: &DMatrix<f64>,
    tau: f64,
) -> Result<(DMatrix<f64>, f64), LinalgError> {
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(invalid("svt", format!("threshold must be >= 0, got {tau}")));
    }
    let factors = svd(a)?;
    let kept = factors
        .singular_values
        .iter()
        .take_while(|&&s| s > tau)
        .count();
    if kept == 0 {
        return Ok((DMatrix::zeros(a.nrows(), a.ncols()), 0.0));
    }
    let u = factors.u.columns(0, kept);
    let v = factors.v.columns(0, kept);
    let shrunk = DVector::from_fn(kept, |i, _| factors.singular_values[i] - tau);
    let nuclear = shrunk.sum();
    Ok((&u * DMatrix::from_diagonal(&shrunk) * v.transpose(), nuclear))
}

/// Column-wise shrinkage: the proximal operator of `tau * l2,1 norm`.
///
/// Column `j` of the result is `max(0, 1 - tau/||q_j||) * q_j`; columns with
/// `||q_j|| <= tau` (including zero columns) come back as zero.
pub fn shrink_l21(q: &DMatrix<f64>, tau: f64) -> Result<DMatrix<f64>, LinalgError> {
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(invalid(
            "shrink_l21",
            format!("threshold must be >= 0, got {tau}"),
        ));
    }
    let mut out = q.clone();
    for mut col in out.column_iter_mut() {
        let norm = col.norm();
        if norm <= tau {
            col.fill(0.0);
        } else {
            col.scale_mut(1.0 - tau / norm);
        }
    }
    Ok(out)
}

/// Relative cutoff under which singular values are treated as zero.
fn rank_cutoff(rows: usize, cols: usize, s_max: f64) -> f64 {
    rows.max(cols) as f64 * s_max * 1.0e-12
}

/// Moore-Penrose pseudo-inverse via thin SVD.
///
/// Singular values below `max(m, n) * s_max * 1e-12` are treated as zero.
pub fn pinv(a: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    let factors = svd(a)?;
    let s_max = factors.singular_values.max();
    let cutoff = rank_cutoff(a.nrows(), a.ncols(), s_max);
    let kept = factors
        .singular_values
        .iter()
        .take_while(|&&s| s > cutoff)
        .count();
    if kept == 0 {
        return Ok(DMatrix::zeros(a.ncols(), a.nrows()));
    }
    let u = factors.u.columns(0, kept);
    let v = factors.v.columns(0, kept);
    let inv = DVector::from_fn(kept, |i, _| 1.0 / factors.singular_values[i]);
    Ok(&v * DMatrix::from_diagonal(&inv) * u.transpose())
}

/// Numerical rank: number of singular values above the pseudo-inverse cutoff.
pub fn numerical_rank(a: &DMatrix<f64>) -> Result<usize, LinalgError> {
    let sv = singular_values_only(a)?;
    let cutoff = rank_cutoff(a.nrows(), a.ncols(), sv.max());
    Ok(sv.iter().take_while(|&&s| s > cutoff).count())
}

/// Ridge regression solve: the minimizer of `||y - X r||^2 + lambda*||r||^2`.
///
/// Solves the normal equations `(X^T X + lambda I) r = X^T y` through a
/// Cholesky factorization, with one step of iterative refinement if needed.
/// Fails if the relative residual cannot be brought under `1e-8`.
pub fn ridge_solve(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
) -> Result<DVector<f64>, LinalgError> {
    if y.len() != x.nrows() {
        return Err(LinalgError::ShapeMismatch {
            op: "ridge_solve",
            lhs_rows: x.nrows(),
            lhs_cols: x.ncols(),
            rhs_rows: y.len(),
            rhs_cols: 1,
        });
    }
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(invalid(
            "ridge_solve",
            format!("lambda must be > 0, got {lambda}"),
        ));
    }
    let gram = regularized_gram(x, lambda);
    let factor = gram.clone().cholesky().ok_or_else(|| {
        invalid(
            "ridge_solve",
            "normal-equations matrix is not positive definite",
        )
    })?;
    let rhs = x.transpose() * y;
    let mut solution = factor.solve(&rhs);
    let tol = 1.0e-8 * rhs.norm();
    let mut residual = (&gram * &solution - &rhs).norm();
    if residual > tol {
        let correction = factor.solve(&(&rhs - &gram * &solution));
        solution += correction;
        residual = (&gram * &solution - &rhs).norm();
        if residual > tol {
            return Err(LinalgError::IllConditioned {
                residual: residual / rhs.norm().max(f64::MIN_POSITIVE),
            });
        }
    }
    Ok(solution)
}

/// `X^T X + lambda I`.
pub fn regularized_gram(x: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    let mut gram = x.transpose() * x;
    for i in 0..gram.nrows() {
        gram[(i, i)] += lambda;
    }
    gram
}
