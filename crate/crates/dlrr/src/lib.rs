//! Robust classification under corrupted training and test data.
//!
//! The pipeline recovers a clean per-class dictionary from corrupted
//! training samples by low-rank representation with a structural-incoherence
//! penalty (solved by inexact augmented Lagrangian iterations), learns a
//! low-rank projection matrix that denoises incoming queries, reduces
//! dimensionality with PCA fit on the recovered dictionary, and classifies
//! with collaborative representation (ridge coding with regularized class
//! residuals). Baseline classifiers (SRC, LRC, nearest neighbor), dataset
//! ingestion, synthetic multi-subspace generation, corruption generators and
//! a benchmark harness round out the crate.
//!
//! Entry points:
//! - [`solver::recover_dictionary`] — per-class low-rank recovery.
//! - [`pipeline::train`] / [`pipeline::predict`] / [`pipeline::evaluate`] —
//!   the end-to-end model.
//! - [`experiment::run_experiment`] — methods x dims x seeds accuracy sweeps.
//!
//! With the default `parallel` feature, batch classification, evaluation and
//! benchmark cells fan out over a rayon thread pool; results are identical to
//! the sequential fallback.

pub mod classifiers;
pub mod data;
pub mod experiment;
pub mod features;
pub mod linalg;
pub mod pipeline;
pub mod projection;
pub mod sample;
pub mod solver;

pub use nalgebra::{DMatrix, DVector};

pub use classifiers::{ClassificationOutcome, Dictionary};
pub use features::FeatureSpace;
pub use pipeline::{PipelineOptions, TrainedModel};
pub use projection::ProjectionMatrix;
pub use sample::SampleMatrix;
pub use solver::{RecoveryResult, SolverConfig};
