//! Labeled sample collections in column-major layout.

use std::ops::Range;

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SampleError {
    #[error("sample matrix must have at least one column")]
    Empty,
    #[error("label count {labels} does not match column count {cols}")]
    LabelCountMismatch { labels: usize, cols: usize },
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("unknown class id {0}")]
    UnknownClass(usize),
}

/// A collection of vectorized samples, one per column, with per-column class
/// labels.
///
/// Columns are stored grouped by ascending class id (a stable reorder of the
/// constructor input), so each class occupies a contiguous column range and
/// per-class dictionaries concatenate in class order. All entries are
/// verified finite on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    data: DMatrix<f64>,
    labels: Vec<usize>,
    class_ids: Vec<usize>,
    class_ranges: Vec<Range<usize>>,
}

impl SampleMatrix {
    pub fn new(data: DMatrix<f64>, labels: Vec<usize>) -> Result<Self, SampleError> {
        if data.ncols() == 0 || data.nrows() == 0 {
            return Err(SampleError::Empty);
        }
        if labels.len() != data.ncols() {
            return Err(SampleError::LabelCountMismatch {
                labels: labels.len(),
                cols: data.ncols(),
            });
        }
        for (col, column) in data.column_iter().enumerate() {
            if let Some(row) = column.iter().position(|v| !v.is_finite()) {
                return Err(SampleError::NonFinite { row, col });
            }
        }

        let mut order: Vec<usize> = (0..data.ncols()).collect();
        order.sort_by_key(|&j| labels[j]);
        let grouped = DMatrix::from_fn(data.nrows(), data.ncols(), |i, j| data[(i, order[j])]);
        let grouped_labels: Vec<usize> = order.iter().map(|&j| labels[j]).collect();

        let mut class_ids = Vec::new();
        let mut class_ranges = Vec::new();
        let mut start = 0;
        for (j, &label) in grouped_labels.iter().enumerate() {
            if class_ids.last() != Some(&label) {
                if !class_ids.is_empty() {
                    class_ranges.push(start..j);
                }
                class_ids.push(label);
                start = j;
            }
        }
        class_ranges.push(start..grouped_labels.len());

        Ok(Self {
            data: grouped,
            labels: grouped_labels,
            class_ids,
            class_ranges,
        })
    }

    /// Number of rows (the sample dimension).
    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    /// Number of columns (the sample count).
    pub fn n_samples(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    /// Per-column labels, in the grouped column order.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Distinct class ids, ascending.
    pub fn class_ids(&self) -> &[usize] {
        &self.class_ids
    }

    pub fn n_classes(&self) -> usize {
        self.class_ids.len()
    }

    /// Column range occupied by one class.
    pub fn class_range(&self, class_id: usize) -> Result<Range<usize>, SampleError> {
        self.class_ids
            .iter()
            .position(|&id| id == class_id)
            .map(|i| self.class_ranges[i].clone())
            .ok_or(SampleError::UnknownClass(class_id))
    }

    /// Owned copy of one class's columns.
    pub fn class_columns(&self, class_id: usize) -> Result<DMatrix<f64>, SampleError> {
        let range = self.class_range(class_id)?;
        Ok(self
            .data
            .columns(range.start, range.end - range.start)
            .into_owned())
    }

    /// Split each class into its first `train_per_class` columns and the rest.
    ///
    /// Errors with [`SampleError::Empty`] if any class would leave either side
    /// without a column.
    pub fn split_per_class(&self, train_per_class: usize) -> Result<(Self, Self), SampleError> {
        let mut train_cols = Vec::new();
        let mut test_cols = Vec::new();
        for range in &self.class_ranges {
            let n = range.end - range.start;
            if train_per_class == 0 || train_per_class >= n {
                return Err(SampleError::Empty);
            }
            for j in range.clone() {
                if j - range.start < train_per_class {
                    train_cols.push(j);
                } else {
                    test_cols.push(j);
                }
            }
        }
        Ok((self.select(&train_cols), self.select(&test_cols)))
    }

    fn select(&self, cols: &[usize]) -> Self {
        let data = DMatrix::from_fn(self.dim(), cols.len(), |i, j| self.data[(i, cols[j])]);
        let labels = cols.iter().map(|&j| self.labels[j]).collect();
        Self::new(data, labels).expect("selection of a valid sample matrix stays valid")
    }
}
