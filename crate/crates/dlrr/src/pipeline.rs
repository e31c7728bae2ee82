//! End-to-end orchestration: recover the clean dictionary, learn the query
//! corrector, fit the feature space, then classify.
//!
//! Training recovers `D` from the (possibly corrupted) training matrix,
//! learns `P = D X^+`, fits PCA on `D`, and builds the classification
//! dictionary from the projection of the *original* training samples into
//! that space (switchable to the clean dictionary via
//! [`DictionarySource::Clean`]). Prediction corrects the raw query first,
//! projects it, then applies collaborative representation.
//!
//! ```
//! use dlrr::data::synth_multisubspace;
//! use dlrr::pipeline::{self, PipelineOptions};
//!
//! let (samples, _clean) = synth_multisubspace(3, 60, 2, 12, 0.01, 7).unwrap();
//! let (train, test) = samples.split_per_class(8).unwrap();
//!
//! // 6 feature dimensions cover the 3 rank-2 class subspaces
//! let mut options = PipelineOptions::new(6);
//! options.solver.lambda = 0.5; // unit-norm columns need a large error weight
//! let model = pipeline::train(&train, &options).unwrap();
//!
//! let report = pipeline::evaluate(&model, &test, 1.1).unwrap();
//! assert!(report.accuracy.unwrap() > 0.9);
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::classifiers::{
    self, classify_batch, ClassificationOutcome, ClassifierError, Dictionary, SrcOptions,
};
use crate::data::{self, DataError};
use crate::features::{self, FeatureSpace, FeaturesError};
use crate::linalg::LinalgError;
use crate::projection::{self, ProjectionMatrix};
use crate::sample::SampleMatrix;
use crate::solver::{self, RecoveryResult, SolverConfig, SolverError, TraceSink};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("recovery stage: {0}")]
    Recovery(#[from] SolverError),
    #[error("projection stage: {0}")]
    Projection(LinalgError),
    #[error("feature stage: {0}")]
    Features(#[from] FeaturesError),
    #[error("classification stage: {0}")]
    Classifier(#[from] ClassifierError),
    #[error("classification stage, query {index}: {source}")]
    Query {
        index: usize,
        source: ClassifierError,
    },
    #[error("model io: {0}")]
    Model(#[from] DataError),
    #[error("invalid options: {0}")]
    InvalidOptions(String),
}

/// Which samples feed the classification dictionary after projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DictionarySource {
    /// Project the original training matrix (the default reading).
    Original,
    /// Project the recovered clean dictionary instead.
    Clean,
}

impl fmt::Display for DictionarySource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DictionarySource::Original => "original",
            DictionarySource::Clean => "clean",
        })
    }
}

impl std::str::FromStr for DictionarySource {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "original" => Ok(DictionarySource::Original),
            "clean" => Ok(DictionarySource::Clean),
            _ => Err(format!("unknown dictionary source `{s}`")),
        }
    }
}

/// Everything that determines a trained model besides the data itself.
#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub solver: SolverConfig,
    /// Feature dimension of the PCA stage.
    pub dim: usize,
    /// Ridge weight of the collaborative-representation stage.
    pub beta: f64,
    pub dictionary_source: DictionarySource,
    /// Apply the learned corrector to queries before projection.
    pub correct_queries: bool,
}

impl PipelineOptions {
    pub fn new(dim: usize) -> Self {
        Self {
            solver: SolverConfig::default(),
            dim,
            beta: 1.1,
            dictionary_source: DictionarySource::Original,
            correct_queries: true,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.dim == 0 {
            return Err(PipelineError::InvalidOptions(
                "dim must be positive".to_string(),
            ));
        }
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(PipelineError::InvalidOptions(
                "beta must be positive".to_string(),
            ));
        }
        self.solver
            .validate()
            .map_err(|e| PipelineError::InvalidOptions(e.to_string()))
    }
}

/// A fully trained model; immutable, shareable across threads.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub recovery: RecoveryResult,
    pub projection: ProjectionMatrix,
    pub feature_space: FeatureSpace,
    pub crc_dictionary: Dictionary,
    pub options: PipelineOptions,
}

/// Train on a labeled sample matrix.
pub fn train(x: &SampleMatrix, options: &PipelineOptions) -> Result<TrainedModel, PipelineError> {
    train_traced::<dyn TraceSink>(x, options, None)
}

/// [`train`] with an optional solver trace sink.
pub fn train_traced<S: TraceSink + ?Sized>(
    x: &SampleMatrix,
    options: &PipelineOptions,
    trace: Option<&mut S>,
) -> Result<TrainedModel, PipelineError> {
    options.validate()?;
    let recovery = solver::recover_dictionary_traced(x, &options.solver, trace)?;
    train_from_recovery(x, recovery, options)
}

/// Build the remaining stages on top of an existing recovery (the recovery
/// does not depend on the feature dimension, so sweeps reuse it).
pub fn train_from_recovery(
    x: &SampleMatrix,
    recovery: RecoveryResult,
    options: &PipelineOptions,
) -> Result<TrainedModel, PipelineError> {
    options.validate()?;
    let projection = projection::learn_projection(x.data(), &recovery.clean_dictionary)
        .map_err(PipelineError::Projection)?;
    let feature_space = features::fit_pca(&recovery.clean_dictionary, options.dim)?;
    let dictionary_input = match options.dictionary_source {
        DictionarySource::Original => x.data(),
        DictionarySource::Clean => &recovery.clean_dictionary,
    };
    let projected = feature_space.project_matrix(dictionary_input)?;
    let crc_dictionary = Dictionary::new(projected, x.labels())?;
    Ok(TrainedModel {
        recovery,
        projection,
        feature_space,
        crc_dictionary,
        options: options.clone(),
    })
}

/// Correct, project and classify one raw-space query with collaborative
/// representation.
pub fn predict(
    model: &TrainedModel,
    y: &DVector<f64>,
    beta: f64,
) -> Result<ClassificationOutcome, PipelineError> {
    let corrected = if model.options.correct_queries {
        model.projection.correct(y).map_err(PipelineError::Projection)?
    } else {
        y.clone()
    };
    let features = model.feature_space.project_vector(&corrected)?;
    Ok(classifiers::crc_classify(
        &model.crc_dictionary,
        &features,
        beta,
    )?)
}

/// Classification rule used at evaluation time.
#[derive(Debug, Clone, Copy)]
pub enum ClassifierChoice {
    Crc { beta: f64 },
    Src { lambda: f64 },
    Lrc,
    Nn,
}

/// Accuracy report over a labeled query set.
#[derive(Debug, Clone)]
pub struct EvaluationReport {
    pub outcomes: Vec<ClassificationOutcome>,
    pub true_labels: Vec<usize>,
    pub correct: usize,
    /// `None` when there were no queries.
    pub accuracy: Option<f64>,
    /// Per class id: (correct, total).
    pub per_class: BTreeMap<usize, (usize, usize)>,
    /// (true label, predicted label) -> count.
    pub confusion: BTreeMap<(usize, usize), usize>,
}

impl EvaluationReport {
    fn build(outcomes: Vec<ClassificationOutcome>, true_labels: Vec<usize>) -> Self {
        let mut correct = 0;
        let mut per_class: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
        let mut confusion: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for (outcome, &truth) in outcomes.iter().zip(&true_labels) {
            let tally = per_class.entry(truth).or_insert((0, 0));
            tally.1 += 1;
            if outcome.predicted_class == truth {
                tally.0 += 1;
                correct += 1;
            }
            *confusion
                .entry((truth, outcome.predicted_class))
                .or_insert(0) += 1;
        }
        let accuracy = if outcomes.is_empty() {
            None
        } else {
            Some(correct as f64 / outcomes.len() as f64)
        };
        Self {
            outcomes,
            true_labels,
            correct,
            accuracy,
            per_class,
            confusion,
        }
    }

    pub fn n_queries(&self) -> usize {
        self.outcomes.len()
    }

    /// Per-query CSV: `query_index,true_label,predicted_label,residual_*`.
    pub fn write_csv<W: Write>(&self, writer: W) -> std::io::Result<()> {
        classifiers::write_outcomes_csv(writer, &self.outcomes, Some(&self.true_labels))
    }
}

/// Evaluate with collaborative representation at the given `beta`.
pub fn evaluate(
    model: &TrainedModel,
    test: &SampleMatrix,
    beta: f64,
) -> Result<EvaluationReport, PipelineError> {
    evaluate_matrix(
        model,
        test.data(),
        test.labels(),
        ClassifierChoice::Crc { beta },
    )
}

/// Evaluate an arbitrary classifier over labeled query columns. An empty
/// query set yields a report with no queries and undefined accuracy.
pub fn evaluate_matrix(
    model: &TrainedModel,
    queries: &DMatrix<f64>,
    true_labels: &[usize],
    choice: ClassifierChoice,
) -> Result<EvaluationReport, PipelineError> {
    if queries.ncols() != true_labels.len() {
        return Err(PipelineError::InvalidOptions(format!(
            "{} query columns but {} labels",
            queries.ncols(),
            true_labels.len()
        )));
    }
    if queries.ncols() == 0 {
        return Ok(EvaluationReport::build(Vec::new(), Vec::new()));
    }
    let corrected = if model.options.correct_queries {
        model
            .projection
            .correct_batch(queries)
            .map_err(PipelineError::Projection)?
    } else {
        queries.clone()
    };
    let features = model.feature_space.project_matrix(&corrected)?;
    let dict = &model.crc_dictionary;
    let results = match choice {
        ClassifierChoice::Crc { beta } => {
            let classifier = dict.crc(beta)?;
            classify_batch(&classifier, &features)
        }
        ClassifierChoice::Src { lambda } => {
            let classifier = dict.src(SrcOptions {
                lambda,
                ..SrcOptions::default()
            })?;
            classify_batch(&classifier, &features)
        }
        ClassifierChoice::Lrc => {
            let classifier = dict.lrc()?;
            classify_batch(&classifier, &features)
        }
        ClassifierChoice::Nn => {
            let classifier = dict.nn();
            classify_batch(&classifier, &features)
        }
    };
    let mut outcomes = Vec::with_capacity(results.len());
    for (index, result) in results.into_iter().enumerate() {
        outcomes.push(result.map_err(|source| PipelineError::Query { index, source })?);
    }
    Ok(EvaluationReport::build(outcomes, true_labels.to_vec()))
}

// ---------------------------------------------------------------------------
// Model persistence

const CONFIG_FILE: &str = "config.txt";
const LABELS_FILE: &str = "labels.csv";
const CLEAN_FILE: &str = "clean_dictionary.mat";
const DICT_FILE: &str = "crc_dictionary.mat";
const PROJ_Y_FILE: &str = "projection_y.mat";
const PROJ_XPINV_FILE: &str = "projection_xpinv.mat";
const PCA_BASIS_FILE: &str = "pca_basis.mat";
const PCA_MEAN_FILE: &str = "pca_mean.mat";

impl TrainedModel {
    /// Persist into a directory of matrix containers plus a plain-text config
    /// snapshot. Objective traces are diagnostics and are not persisted.
    pub fn save(&self, dir: &Path) -> Result<(), PipelineError> {
        fs::create_dir_all(dir).map_err(|e| {
            PipelineError::Model(DataError::Io {
                path: dir.to_path_buf(),
                source: e,
            })
        })?;
        let opts = &self.options;
        let solver = &opts.solver;
        let mut config = String::new();
        let mut push = |key: &str, value: String| {
            config.push_str(key);
            config.push_str(" = ");
            config.push_str(&value);
            config.push('\n');
        };
        push("solver.lambda", solver.lambda.to_string());
        push("solver.eta", solver.eta.to_string());
        push("solver.mu0", solver.mu0.to_string());
        push("solver.rho_growth", solver.rho_growth.to_string());
        push("solver.mu_max", solver.mu_max.to_string());
        push("solver.epsilon", solver.epsilon.to_string());
        push("solver.max_iter", solver.max_iter.to_string());
        push("solver.outer_passes", solver.outer_passes.to_string());
        push("pipeline.dim", opts.dim.to_string());
        push("pipeline.beta", opts.beta.to_string());
        push("pipeline.dictionary_source", opts.dictionary_source.to_string());
        push("pipeline.correct_queries", opts.correct_queries.to_string());
        push(
            "projection.source_rank",
            self.projection.source_rank().to_string(),
        );
        push(
            "projection.fit_residual",
            self.projection.fit_residual().to_string(),
        );
        push(
            "recovery.class_ids",
            join_values(self.recovery.class_ids.iter()),
        );
        push(
            "recovery.converged",
            join_values(self.recovery.converged.iter()),
        );
        let write_text = |name: &str, text: &str| -> Result<(), PipelineError> {
            fs::write(dir.join(name), text).map_err(|e| {
                PipelineError::Model(DataError::Io {
                    path: dir.join(name),
                    source: e,
                })
            })
        };
        write_text(CONFIG_FILE, &config)?;
        let labels: String = self
            .crc_dictionary
            .labels()
            .iter()
            .map(|l| format!("{l}\n"))
            .collect();
        write_text(LABELS_FILE, &labels)?;

        let save = |name: String, m: &DMatrix<f64>| -> Result<(), PipelineError> {
            Ok(data::save_matrix(&dir.join(name), m)?)
        };
        save(CLEAN_FILE.to_string(), &self.recovery.clean_dictionary)?;
        for (idx, id) in self.recovery.class_ids.iter().enumerate() {
            save(format!("class_{id}_z.mat"), &self.recovery.per_class_z[idx])?;
            save(format!("class_{id}_e.mat"), &self.recovery.per_class_e[idx])?;
        }
        let (proj_y, proj_xpinv) = self.projection.factors();
        save(PROJ_Y_FILE.to_string(), proj_y)?;
        save(PROJ_XPINV_FILE.to_string(), proj_xpinv)?;
        save(PCA_BASIS_FILE.to_string(), self.feature_space.basis())?;
        let mean = DMatrix::from_column_slice(
            self.feature_space.mean().len(),
            1,
            self.feature_space.mean().as_slice(),
        );
        save(PCA_MEAN_FILE.to_string(), &mean)?;
        save(DICT_FILE.to_string(), self.crc_dictionary.samples())?;
        Ok(())
    }

    /// Load a model saved by [`TrainedModel::save`]. Predictions from the
    /// loaded model reproduce the original bit for bit.
    pub fn load(dir: &Path) -> Result<Self, PipelineError> {
        let config_path = dir.join(CONFIG_FILE);
        let text = fs::read_to_string(&config_path).map_err(|e| {
            PipelineError::Model(DataError::Io {
                path: config_path.clone(),
                source: e,
            })
        })?;
        let mut entries: BTreeMap<String, String> = BTreeMap::new();
        for line in text.lines() {
            if line.trim().is_empty() {
                continue;
            }
            let (key, value) = line.split_once(" = ").ok_or_else(|| {
                PipelineError::InvalidOptions(format!("malformed model config line `{line}`"))
            })?;
            entries.insert(key.to_string(), value.to_string());
        }
        let mut get = |key: &str| -> Result<String, PipelineError> {
            entries
                .remove(key)
                .ok_or_else(|| PipelineError::InvalidOptions(format!("missing model key `{key}`")))
        };
        let parse_f64 = |v: String, key: &str| -> Result<f64, PipelineError> {
            v.parse().map_err(|_| {
                PipelineError::InvalidOptions(format!("bad float for `{key}`: {v}"))
            })
        };
        let parse_usize = |v: String, key: &str| -> Result<usize, PipelineError> {
            v.parse().map_err(|_| {
                PipelineError::InvalidOptions(format!("bad integer for `{key}`: {v}"))
            })
        };

        let solver = SolverConfig {
            lambda: parse_f64(get("solver.lambda")?, "solver.lambda")?,
            eta: parse_f64(get("solver.eta")?, "solver.eta")?,
            mu0: parse_f64(get("solver.mu0")?, "solver.mu0")?,
            rho_growth: parse_f64(get("solver.rho_growth")?, "solver.rho_growth")?,
            mu_max: parse_f64(get("solver.mu_max")?, "solver.mu_max")?,
            epsilon: parse_f64(get("solver.epsilon")?, "solver.epsilon")?,
            max_iter: parse_usize(get("solver.max_iter")?, "solver.max_iter")?,
            outer_passes: parse_usize(get("solver.outer_passes")?, "solver.outer_passes")?,
        };
        let options = PipelineOptions {
            solver,
            dim: parse_usize(get("pipeline.dim")?, "pipeline.dim")?,
            beta: parse_f64(get("pipeline.beta")?, "pipeline.beta")?,
            dictionary_source: get("pipeline.dictionary_source")?
                .parse()
                .map_err(PipelineError::InvalidOptions)?,
            correct_queries: get("pipeline.correct_queries")?
                .parse()
                .map_err(|_| PipelineError::InvalidOptions("bad correct_queries".to_string()))?,
        };
        let source_rank = parse_usize(get("projection.source_rank")?, "projection.source_rank")?;
        let fit_residual = parse_f64(get("projection.fit_residual")?, "projection.fit_residual")?;
        let class_ids: Vec<usize> = split_values(&get("recovery.class_ids")?)
            .map_err(PipelineError::InvalidOptions)?;
        let converged: Vec<bool> = split_values(&get("recovery.converged")?)
            .map_err(PipelineError::InvalidOptions)?;

        let load = |name: String| -> Result<DMatrix<f64>, PipelineError> {
            Ok(data::load_matrix(&dir.join(name))?)
        };
        let clean_dictionary = load(CLEAN_FILE.to_string())?;
        let mut per_class_z = Vec::with_capacity(class_ids.len());
        let mut per_class_e = Vec::with_capacity(class_ids.len());
        for id in &class_ids {
            per_class_z.push(load(format!("class_{id}_z.mat"))?);
            per_class_e.push(load(format!("class_{id}_e.mat"))?);
        }
        let recovery = RecoveryResult {
            class_ids: class_ids.clone(),
            per_class_z,
            per_class_e,
            clean_dictionary,
            objective_traces: vec![Vec::new(); class_ids.len()],
            converged,
        };
        let projection = ProjectionMatrix::from_factors(
            load(PROJ_Y_FILE.to_string())?,
            load(PROJ_XPINV_FILE.to_string())?,
            source_rank,
            fit_residual,
        )
        .map_err(PipelineError::Projection)?;
        let basis = load(PCA_BASIS_FILE.to_string())?;
        let mean_matrix = load(PCA_MEAN_FILE.to_string())?;
        let mean = DVector::from_column_slice(mean_matrix.as_slice());
        let feature_space = FeatureSpace::from_parts(basis, mean)?;

        let labels_path = dir.join(LABELS_FILE);
        let labels_text = fs::read_to_string(&labels_path).map_err(|e| {
            PipelineError::Model(DataError::Io {
                path: labels_path,
                source: e,
            })
        })?;
        let labels: Vec<usize> = labels_text
            .lines()
            .map(|l| {
                l.trim().parse().map_err(|_| {
                    PipelineError::InvalidOptions(format!("bad label line `{l}`"))
                })
            })
            .collect::<Result<_, _>>()?;
        let crc_dictionary =
            Dictionary::from_normalized(load(DICT_FILE.to_string())?, &labels)?;

        Ok(TrainedModel {
            recovery,
            projection,
            feature_space,
            crc_dictionary,
            options,
        })
    }
}

fn join_values<T: ToString>(values: impl Iterator<Item = T>) -> String {
    values
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn split_values<T: std::str::FromStr>(text: &str) -> Result<Vec<T>, String> {
    text.split(',')
        .map(|v| {
            v.trim()
                .parse()
                .map_err(|_| format!("bad list entry `{v}`"))
        })
        .collect()
}
