//! PCA (eigenface) dimensionality reduction fit on the recovered clean
//! dictionary.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::linalg::{self, LinalgError};

#[derive(Debug, Error)]
pub enum FeaturesError {
    #[error("requested dimension {requested} exceeds the {available} non-degenerate directions")]
    DimTooLarge { requested: usize, available: usize },
    #[error("requested dimension must be positive")]
    ZeroDim,
    #[error("fitting needs at least two columns")]
    TooFewColumns,
    #[error("input row dimension {found} does not match the feature space dimension {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// An orthonormal linear feature space: `features = basis^T (v - mean)`.
#[derive(Debug, Clone)]
pub struct FeatureSpace {
    basis: DMatrix<f64>,
    mean: DVector<f64>,
}

/// Eigenvalues this far below the largest are treated as zero variance.
const VARIANCE_CUTOFF: f64 = 1e-12;

/// Fit the top-`dim` principal directions of the columns of `d`.
///
/// The basis comes from the thin SVD of the mean-centered matrix, so the
/// explained variance is non-increasing across coordinates. Directions whose
/// eigenvalue falls below `1e-12` of the largest are considered degenerate
/// and are not available.
pub fn fit_pca(d: &DMatrix<f64>, dim: usize) -> Result<FeatureSpace, FeaturesError> {
    if dim == 0 {
        return Err(FeaturesError::ZeroDim);
    }
    if d.ncols() < 2 {
        return Err(FeaturesError::TooFewColumns);
    }
    let mean = d.column_mean();
    let mut centered = d.clone();
    for mut col in centered.column_iter_mut() {
        col -= &mean;
    }
    let factors = linalg::svd(&centered)?;
    let s_max = factors.singular_values.max();
    // eigenvalues of the covariance scale with squared singular values
    let threshold = s_max * VARIANCE_CUTOFF.sqrt();
    let available = factors
        .singular_values
        .iter()
        .take_while(|&&s| s > threshold)
        .count()
        .min(d.ncols() - 1);
    if dim > available {
        return Err(FeaturesError::DimTooLarge {
            requested: dim,
            available,
        });
    }
    Ok(FeatureSpace {
        basis: factors.u.columns(0, dim).into_owned(),
        mean,
    })
}

impl FeatureSpace {
    /// Ambient dimension the space was fit in.
    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    /// Number of feature coordinates.
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// Project one sample: `basis^T (v - mean)`.
    pub fn project_vector(&self, v: &DVector<f64>) -> Result<DVector<f64>, FeaturesError> {
        if v.len() != self.ambient_dim() {
            return Err(FeaturesError::DimensionMismatch {
                expected: self.ambient_dim(),
                found: v.len(),
            });
        }
        Ok(self.basis.transpose() * (v - &self.mean))
    }

    /// Project every column of a matrix.
    pub fn project_matrix(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>, FeaturesError> {
        if m.nrows() != self.ambient_dim() {
            return Err(FeaturesError::DimensionMismatch {
                expected: self.ambient_dim(),
                found: m.nrows(),
            });
        }
        let mut centered = m.clone();
        for mut col in centered.column_iter_mut() {
            col -= &self.mean;
        }
        Ok(self.basis.transpose() * centered)
    }

    /// Rebuild from persisted parts, re-checking orthonormality.
    pub fn from_parts(basis: DMatrix<f64>, mean: DVector<f64>) -> Result<Self, FeaturesError> {
        if basis.nrows() != mean.len() {
            return Err(FeaturesError::DimensionMismatch {
                expected: basis.nrows(),
                found: mean.len(),
            });
        }
        let gram = basis.transpose() * &basis;
        let eye = DMatrix::identity(basis.ncols(), basis.ncols());
        if (gram - eye).norm() > 1e-8 {
            return Err(FeaturesError::Linalg(LinalgError::Invalid {
                op: "feature space",
                message: "basis columns are not orthonormal".to_string(),
            }));
        }
        Ok(Self { basis, mean })
    }
}
