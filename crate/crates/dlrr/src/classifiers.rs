//! Classification rules over a labeled dictionary: collaborative
//! representation (the primary rule), sparse representation, class-wise
//! linear regression and nearest neighbor baselines.
//!
//! Dictionary columns are l2-normalized on construction, applied uniformly to
//! every classifier so that regularization weights transfer across datasets.
//! Residual ties break toward the lowest class label. Classifiers precompute
//! whatever factorization they can per dictionary and are reentrant; batch
//! classification fans out over queries on the rayon pool when the `parallel`
//! feature is enabled.

use std::io::Write;
use std::ops::Range;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use thiserror::Error;

use crate::linalg::{self, LinalgError};
use crate::sample::{SampleError, SampleMatrix};

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error("query dimension {found} does not match dictionary dimension {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("query contains non-finite entries")]
    NonFiniteQuery,
    #[error("degenerate query: no class received a usable coefficient")]
    DegenerateQuery,
    #[error("{what} must be positive, got {value}")]
    InvalidParameter { what: &'static str, value: f64 },
}

/// Feature-space training samples with l2-normalized columns, grouped by
/// ascending class id.
#[derive(Debug, Clone)]
pub struct Dictionary {
    samples: DMatrix<f64>,
    labels: Vec<usize>,
    class_ids: Vec<usize>,
    class_ranges: Vec<Range<usize>>,
}

impl Dictionary {
    /// Build from raw columns and labels; columns are grouped by class and
    /// l2-normalized (zero columns stay zero).
    pub fn new(data: DMatrix<f64>, labels: &[usize]) -> Result<Self, ClassifierError> {
        let grouped = SampleMatrix::new(data, labels.to_vec())?;
        let mut samples = grouped.data().clone();
        for mut col in samples.column_iter_mut() {
            let norm = col.norm();
            if norm > 0.0 {
                col.scale_mut(1.0 / norm);
            }
        }
        Ok(Self {
            class_ids: grouped.class_ids().to_vec(),
            class_ranges: grouped
                .class_ids()
                .iter()
                .map(|&id| grouped.class_range(id).expect("id from the matrix"))
                .collect(),
            labels: grouped.labels().to_vec(),
            samples,
        })
    }

    /// Rebuild from already-normalized columns (used when deserializing, so
    /// stored coefficients reproduce bit-identically).
    pub fn from_normalized(data: DMatrix<f64>, labels: &[usize]) -> Result<Self, ClassifierError> {
        let grouped = SampleMatrix::new(data, labels.to_vec())?;
        Ok(Self {
            class_ids: grouped.class_ids().to_vec(),
            class_ranges: grouped
                .class_ids()
                .iter()
                .map(|&id| grouped.class_range(id).expect("id from the matrix"))
                .collect(),
            labels: grouped.labels().to_vec(),
            samples: grouped.data().clone(),
        })
    }

    pub fn samples(&self) -> &DMatrix<f64> {
        &self.samples
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_ids(&self) -> &[usize] {
        &self.class_ids
    }

    pub fn n_classes(&self) -> usize {
        self.class_ids.len()
    }

    /// Feature dimension.
    pub fn dim(&self) -> usize {
        self.samples.nrows()
    }

    fn class_slice(&self, idx: usize) -> nalgebra::DMatrixView<'_, f64> {
        let range = &self.class_ranges[idx];
        self.samples.columns(range.start, range.end - range.start)
    }

    fn check_query(&self, y: &DVector<f64>) -> Result<(), ClassifierError> {
        if y.len() != self.dim() {
            return Err(ClassifierError::DimensionMismatch {
                expected: self.dim(),
                found: y.len(),
            });
        }
        if !y.iter().all(|v| v.is_finite()) {
            return Err(ClassifierError::NonFiniteQuery);
        }
        Ok(())
    }

    /// Collaborative-representation classifier with the ridge operator
    /// factored once.
    pub fn crc(&self, beta: f64) -> Result<CrcClassifier<'_>, ClassifierError> {
        CrcClassifier::new(self, beta)
    }

    /// Sparse-representation classifier with the splitting operator factored
    /// once.
    pub fn src(&self, options: SrcOptions) -> Result<SrcClassifier<'_>, ClassifierError> {
        SrcClassifier::new(self, options)
    }

    /// Class-wise least-squares classifier with per-class pseudo-inverses
    /// precomputed.
    pub fn lrc(&self) -> Result<LrcClassifier<'_>, ClassifierError> {
        LrcClassifier::new(self)
    }

    /// Nearest-neighbor classifier.
    pub fn nn(&self) -> NnClassifier<'_> {
        NnClassifier { dict: self }
    }
}

/// Representation coefficients partitioned by class.
#[derive(Debug, Clone)]
pub struct CoefficientVector {
    values: DVector<f64>,
    class_ids: Vec<usize>,
    ranges: Vec<Range<usize>>,
}

impl CoefficientVector {
    fn new(values: DVector<f64>, dict: &Dictionary) -> Self {
        Self {
            values,
            class_ids: dict.class_ids.clone(),
            ranges: dict.class_ranges.clone(),
        }
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    /// Coefficients belonging to one class.
    pub fn class_slice(&self, class_id: usize) -> Option<nalgebra::DVectorView<'_, f64>> {
        let idx = self.class_ids.iter().position(|&id| id == class_id)?;
        let range = &self.ranges[idx];
        Some(self.values.rows(range.start, range.end - range.start))
    }
}

/// Result of classifying one query.
#[derive(Debug, Clone)]
pub struct ClassificationOutcome {
    pub predicted_class: usize,
    /// Ascending class ids the residuals refer to.
    pub class_ids: Vec<usize>,
    /// One residual per class; `predicted_class` indexes the minimum, with
    /// ties broken toward the lowest label.
    pub per_class_residuals: Vec<f64>,
    pub coefficients: Option<CoefficientVector>,
    /// False when an iterative coding solver hit its cap; the best iterate is
    /// still reported.
    pub converged: bool,
}

impl ClassificationOutcome {
    pub fn residual_for(&self, class_id: usize) -> Option<f64> {
        self.class_ids
            .iter()
            .position(|&id| id == class_id)
            .map(|i| self.per_class_residuals[i])
    }
}

/// Lowest-label argmin; errors when every residual is infinite.
fn argmin_class(class_ids: &[usize], residuals: &[f64]) -> Result<usize, ClassifierError> {
    let mut best: Option<(usize, f64)> = None;
    for (&id, &r) in class_ids.iter().zip(residuals) {
        if !r.is_finite() {
            continue;
        }
        match best {
            Some((_, current)) if r >= current => {}
            _ => best = Some((id, r)),
        }
    }
    best.map(|(id, _)| id).ok_or(ClassifierError::DegenerateQuery)
}

/// A classification rule over one immutable dictionary.
pub trait Classifier: Sync {
    fn classify(&self, query: &DVector<f64>) -> Result<ClassificationOutcome, ClassifierError>;
}

// ---------------------------------------------------------------------------
// Collaborative representation

/// Ridge coding over the whole dictionary with regularized class residuals
/// `e_i = ||y - X_i rho_i|| / ||rho_i||`.
pub struct CrcClassifier<'d> {
    dict: &'d Dictionary,
    factor: Cholesky<f64, Dyn>,
}

impl<'d> CrcClassifier<'d> {
    fn new(dict: &'d Dictionary, beta: f64) -> Result<Self, ClassifierError> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(ClassifierError::InvalidParameter {
                what: "beta",
                value: beta,
            });
        }
        let gram = linalg::regularized_gram(&dict.samples, beta);
        let factor = gram.cholesky().ok_or(LinalgError::Invalid {
            op: "crc",
            message: "ridge system is not positive definite".to_string(),
        })?;
        Ok(Self { dict, factor })
    }
}

impl Classifier for CrcClassifier<'_> {
    fn classify(&self, query: &DVector<f64>) -> Result<ClassificationOutcome, ClassifierError> {
        self.dict.check_query(query)?;
        let rho = self.factor.solve(&(self.dict.samples.transpose() * query));
        let mut residuals = Vec::with_capacity(self.dict.n_classes());
        for idx in 0..self.dict.n_classes() {
            let range = &self.dict.class_ranges[idx];
            let rho_i = rho.rows(range.start, range.end - range.start);
            let denom = rho_i.norm();
            if denom == 0.0 {
                residuals.push(f64::INFINITY);
            } else {
                let class_cols = self.dict.class_slice(idx);
                residuals.push((query - class_cols * rho_i).norm() / denom);
            }
        }
        let predicted = argmin_class(&self.dict.class_ids, &residuals)?;
        Ok(ClassificationOutcome {
            predicted_class: predicted,
            class_ids: self.dict.class_ids.clone(),
            per_class_residuals: residuals,
            coefficients: Some(CoefficientVector::new(rho, self.dict)),
            converged: true,
        })
    }
}

/// One-shot collaborative-representation classification.
pub fn crc_classify(
    dict: &Dictionary,
    query: &DVector<f64>,
    beta: f64,
) -> Result<ClassificationOutcome, ClassifierError> {
    dict.crc(beta)?.classify(query)
}

// ---------------------------------------------------------------------------
// Sparse representation

/// Settings of the l1 coding solver behind SRC.
#[derive(Debug, Clone, Copy)]
pub struct SrcOptions {
    /// l1 weight in `||y - X a||^2 + lambda*||a||_1`.
    pub lambda: f64,
    /// Splitting penalty of the alternating scheme.
    pub rho: f64,
    /// Residual tolerance of the alternating scheme.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SrcOptions {
    fn default() -> Self {
        Self {
            lambda: 0.001,
            rho: 1.0,
            tol: 1e-6,
            max_iter: 1000,
        }
    }
}

/// Sparse coding over the whole dictionary, classification by unregularized
/// class residuals `||y - X_i a_i||`.
pub struct SrcClassifier<'d> {
    dict: &'d Dictionary,
    options: SrcOptions,
    factor: Cholesky<f64, Dyn>,
}

impl<'d> SrcClassifier<'d> {
    fn new(dict: &'d Dictionary, options: SrcOptions) -> Result<Self, ClassifierError> {
        if !(options.lambda > 0.0) || !options.lambda.is_finite() {
            return Err(ClassifierError::InvalidParameter {
                what: "lambda",
                value: options.lambda,
            });
        }
        if !(options.rho > 0.0) || !options.rho.is_finite() {
            return Err(ClassifierError::InvalidParameter {
                what: "rho",
                value: options.rho,
            });
        }
        // alternating scheme solves (2 X^T X + rho I) a = 2 X^T y + rho(z - u)
        let mut gram = dict.samples.transpose() * &dict.samples * 2.0;
        for i in 0..gram.nrows() {
            gram[(i, i)] += options.rho;
        }
        let factor = gram.cholesky().ok_or(LinalgError::Invalid {
            op: "src",
            message: "splitting system is not positive definite".to_string(),
        })?;
        Ok(Self {
            dict,
            options,
            factor,
        })
    }
}

fn soft_threshold(v: &DVector<f64>, tau: f64) -> DVector<f64> {
    v.map(|x| {
        if x > tau {
            x - tau
        } else if x < -tau {
            x + tau
        } else {
            0.0
        }
    })
}

impl Classifier for SrcClassifier<'_> {
    fn classify(&self, query: &DVector<f64>) -> Result<ClassificationOutcome, ClassifierError> {
        self.dict.check_query(query)?;
        let n = self.dict.samples.ncols();
        let xty2 = self.dict.samples.transpose() * query * 2.0;
        let mut rho = self.options.rho;
        // residual balancing rescales rho; the shared factor covers the
        // starting value, later values refactor locally
        let mut adapted_factor: Option<Cholesky<f64, Dyn>> = None;
        let mut split = DVector::zeros(n);
        let mut dual = DVector::zeros(n);
        let mut converged = false;
        let sqrt_n = (n as f64).sqrt();
        for iter in 0..self.options.max_iter {
            let factor = adapted_factor.as_ref().unwrap_or(&self.factor);
            let alpha = factor.solve(&(&xty2 + (&split - &dual) * rho));
            let split_old = split.clone();
            split = soft_threshold(&(&alpha + &dual), self.options.lambda / rho);
            dual += &alpha - &split;

            let primal = (&alpha - &split).norm();
            let dual_res = ((&split - &split_old) * rho).norm();
            let eps_primal =
                sqrt_n * self.options.tol + self.options.tol * alpha.norm().max(split.norm());
            let eps_dual = sqrt_n * self.options.tol + self.options.tol * (&dual * rho).norm();
            if primal <= eps_primal && dual_res <= eps_dual {
                converged = true;
                break;
            }
            if (iter + 1) % 10 == 0 {
                let rescale = if primal > 10.0 * dual_res {
                    Some(2.0)
                } else if dual_res > 10.0 * primal {
                    Some(0.5)
                } else {
                    None
                };
                if let Some(factor_change) = rescale {
                    rho *= factor_change;
                    dual /= factor_change;
                    let mut gram = self.dict.samples.transpose() * &self.dict.samples * 2.0;
                    for i in 0..n {
                        gram[(i, i)] += rho;
                    }
                    adapted_factor = Some(gram.cholesky().ok_or(LinalgError::Invalid {
                        op: "src",
                        message: "splitting system is not positive definite".to_string(),
                    })?);
                }
            }
        }

        let mut residuals = Vec::with_capacity(self.dict.n_classes());
        let mut any_nonzero = false;
        for idx in 0..self.dict.n_classes() {
            let range = &self.dict.class_ranges[idx];
            let alpha_i = split.rows(range.start, range.end - range.start);
            if alpha_i.iter().any(|&v| v != 0.0) {
                any_nonzero = true;
            }
            let class_cols = self.dict.class_slice(idx);
            residuals.push((query - class_cols * alpha_i).norm());
        }
        if !any_nonzero {
            return Err(ClassifierError::DegenerateQuery);
        }
        let predicted = argmin_class(&self.dict.class_ids, &residuals)?;
        Ok(ClassificationOutcome {
            predicted_class: predicted,
            class_ids: self.dict.class_ids.clone(),
            per_class_residuals: residuals,
            coefficients: Some(CoefficientVector::new(split, self.dict)),
            converged,
        })
    }
}

/// One-shot sparse-representation classification with default solver
/// settings.
pub fn src_classify(
    dict: &Dictionary,
    query: &DVector<f64>,
    lambda: f64,
) -> Result<ClassificationOutcome, ClassifierError> {
    dict.src(SrcOptions {
        lambda,
        ..SrcOptions::default()
    })?
    .classify(query)
}

// ---------------------------------------------------------------------------
// Linear regression classification

/// Class-wise least squares: `b_i = X_i^+ y`, residual `||y - X_i b_i||`.
pub struct LrcClassifier<'d> {
    dict: &'d Dictionary,
    pinvs: Vec<DMatrix<f64>>,
}

impl<'d> LrcClassifier<'d> {
    fn new(dict: &'d Dictionary) -> Result<Self, ClassifierError> {
        let pinvs = (0..dict.n_classes())
            .map(|idx| linalg::pinv(&dict.class_slice(idx).into_owned()))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { dict, pinvs })
    }
}

impl Classifier for LrcClassifier<'_> {
    fn classify(&self, query: &DVector<f64>) -> Result<ClassificationOutcome, ClassifierError> {
        self.dict.check_query(query)?;
        let mut residuals = Vec::with_capacity(self.dict.n_classes());
        let mut coefficients = DVector::zeros(self.dict.samples.ncols());
        for idx in 0..self.dict.n_classes() {
            let beta = &self.pinvs[idx] * query;
            let class_cols = self.dict.class_slice(idx);
            residuals.push((query - class_cols * &beta).norm());
            let range = &self.dict.class_ranges[idx];
            coefficients
                .rows_mut(range.start, range.end - range.start)
                .copy_from(&beta);
        }
        let predicted = argmin_class(&self.dict.class_ids, &residuals)?;
        Ok(ClassificationOutcome {
            predicted_class: predicted,
            class_ids: self.dict.class_ids.clone(),
            per_class_residuals: residuals,
            coefficients: Some(CoefficientVector::new(coefficients, self.dict)),
            converged: true,
        })
    }
}

/// One-shot class-wise least-squares classification.
pub fn lrc_classify(
    dict: &Dictionary,
    query: &DVector<f64>,
) -> Result<ClassificationOutcome, ClassifierError> {
    dict.lrc()?.classify(query)
}

// ---------------------------------------------------------------------------
// Nearest neighbor

/// Euclidean nearest training column; per-class residuals hold each class's
/// minimum distance.
pub struct NnClassifier<'d> {
    dict: &'d Dictionary,
}

impl Classifier for NnClassifier<'_> {
    fn classify(&self, query: &DVector<f64>) -> Result<ClassificationOutcome, ClassifierError> {
        self.dict.check_query(query)?;
        let mut residuals = Vec::with_capacity(self.dict.n_classes());
        for idx in 0..self.dict.n_classes() {
            let class_cols = self.dict.class_slice(idx);
            let best = class_cols
                .column_iter()
                .map(|c| (query - c).norm())
                .fold(f64::INFINITY, f64::min);
            residuals.push(best);
        }
        let predicted = argmin_class(&self.dict.class_ids, &residuals)?;
        Ok(ClassificationOutcome {
            predicted_class: predicted,
            class_ids: self.dict.class_ids.clone(),
            per_class_residuals: residuals,
            coefficients: None,
            converged: true,
        })
    }
}

/// One-shot nearest-neighbor classification.
pub fn nn_classify(
    dict: &Dictionary,
    query: &DVector<f64>,
) -> Result<ClassificationOutcome, ClassifierError> {
    dict.nn().classify(query)
}

// ---------------------------------------------------------------------------
// Batch classification

/// Classify every column of `queries`; outcomes come back in column order and
/// are identical to per-query calls regardless of the thread pool.
pub fn classify_batch<C: Classifier>(
    classifier: &C,
    queries: &DMatrix<f64>,
) -> Vec<Result<ClassificationOutcome, ClassifierError>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..queries.ncols())
            .into_par_iter()
            .map(|j| classifier.classify(&queries.column(j).into_owned()))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..queries.ncols())
            .map(|j| classifier.classify(&queries.column(j).into_owned()))
            .collect()
    }
}

/// Emit one CSV row per outcome: `query_index,true_label,predicted_label`
/// followed by one residual column per class id.
pub fn write_outcomes_csv<W: Write>(
    mut writer: W,
    outcomes: &[ClassificationOutcome],
    true_labels: Option<&[usize]>,
) -> std::io::Result<()> {
    if outcomes.is_empty() {
        writeln!(writer, "query_index,true_label,predicted_label")?;
        return Ok(());
    }
    let header: String = outcomes[0]
        .class_ids
        .iter()
        .map(|id| format!(",residual_{id}"))
        .collect();
    writeln!(writer, "query_index,true_label,predicted_label{header}")?;
    for (i, outcome) in outcomes.iter().enumerate() {
        let truth = true_labels
            .and_then(|t| t.get(i))
            .map(|l| l.to_string())
            .unwrap_or_default();
        write!(writer, "{i},{truth},{}", outcome.predicted_class)?;
        for r in &outcome.per_class_residuals {
            write!(writer, ",{r}")?;
        }
        writeln!(writer)?;
    }
    Ok(())
}
