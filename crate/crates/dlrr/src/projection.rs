//! Low-rank projection operator `P = Y X^+` that maps corrupted samples
//! toward the subspaces of the recovered clean dictionary.
//!
//! `P` is kept in factored form `(Y, X^+)` and applied as `Y (X^+ v)`,
//! which avoids materializing an `m x m` operator at raw-pixel
//! dimensionality. [`ProjectionMatrix::materialize`] builds the dense
//! operator on demand.

use nalgebra::{DMatrix, DVector};

use crate::linalg::{self, LinalgError};

/// The learned corrector, immutable and shareable across threads.
#[derive(Debug, Clone)]
pub struct ProjectionMatrix {
    y: DMatrix<f64>,
    x_pinv: DMatrix<f64>,
    source_rank: usize,
    fit_residual: f64,
}

impl ProjectionMatrix {
    /// Sample dimension `m` the operator acts on.
    pub fn dim(&self) -> usize {
        self.y.nrows()
    }

    /// Numerical rank of the training matrix the pseudo-inverse used.
    pub fn source_rank(&self) -> usize {
        self.source_rank
    }

    /// Achieved fit `||P X - Y||_F`. Near zero whenever the row space of `Y`
    /// lies inside the row space of `X`; otherwise `P` is the least-squares
    /// operator and this reports how far the fit is.
    pub fn fit_residual(&self) -> f64 {
        self.fit_residual
    }

    /// Apply the corrector to one sample.
    pub fn correct(&self, v: &DVector<f64>) -> Result<DVector<f64>, LinalgError> {
        if v.len() != self.dim() {
            return Err(LinalgError::ShapeMismatch {
                op: "correct_sample",
                lhs_rows: self.dim(),
                lhs_cols: self.dim(),
                rhs_rows: v.len(),
                rhs_cols: 1,
            });
        }
        Ok(&self.y * (&self.x_pinv * v))
    }

    /// Apply the corrector to every column.
    pub fn correct_batch(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
        if m.nrows() != self.dim() {
            return Err(LinalgError::ShapeMismatch {
                op: "correct_sample",
                lhs_rows: self.dim(),
                lhs_cols: self.dim(),
                rhs_rows: m.nrows(),
                rhs_cols: m.ncols(),
            });
        }
        Ok(&self.y * (&self.x_pinv * m))
    }

    /// Dense `m x m` operator `Y X^+`.
    pub fn materialize(&self) -> DMatrix<f64> {
        &self.y * &self.x_pinv
    }

    /// Factored form `(Y, X^+)`.
    pub fn factors(&self) -> (&DMatrix<f64>, &DMatrix<f64>) {
        (&self.y, &self.x_pinv)
    }

    /// Rebuild from persisted factors.
    pub fn from_factors(
        y: DMatrix<f64>,
        x_pinv: DMatrix<f64>,
        source_rank: usize,
        fit_residual: f64,
    ) -> Result<Self, LinalgError> {
        if y.ncols() != x_pinv.nrows() || y.nrows() != x_pinv.ncols() {
            return Err(LinalgError::ShapeMismatch {
                op: "projection factors",
                lhs_rows: y.nrows(),
                lhs_cols: y.ncols(),
                rhs_rows: x_pinv.nrows(),
                rhs_cols: x_pinv.ncols(),
            });
        }
        Ok(Self {
            y,
            x_pinv,
            source_rank,
            fit_residual,
        })
    }
}

/// Learn `P = Y X^+` from the training matrix `X` and its recovered clean
/// counterpart `Y` (identical shapes).
pub fn learn_projection(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
) -> Result<ProjectionMatrix, LinalgError> {
    if x.shape() != y.shape() {
        return Err(LinalgError::ShapeMismatch {
            op: "learn_projection",
            lhs_rows: x.nrows(),
            lhs_cols: x.ncols(),
            rhs_rows: y.nrows(),
            rhs_cols: y.ncols(),
        });
    }
    let x_pinv = linalg::pinv(x)?;
    let source_rank = linalg::numerical_rank(x)?;
    // P X - Y = Y (X^+ X) - Y, evaluated in the factored form
    let fit_residual = (y * (&x_pinv * x) - y).norm();
    Ok(ProjectionMatrix {
        y: y.clone(),
        x_pinv,
        source_rank,
        fit_residual,
    })
}
