//! Benchmark harness: methods x dims x seeds accuracy sweeps with CSV
//! emission, plus the corruption command used to prepare artifacts.
//!
//! Experiments are described by a flat key-value config file with section
//! headers, parsed strictly: unknown sections or keys are errors, since a
//! silently ignored hyperparameter would invalidate a comparison. Every cell
//! of the sweep is reproducible from its `(config, seed)` pair; cell failures
//! are recorded without aborting the rest of the grid.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use thiserror::Error;

use crate::classifiers::{classify_batch, Dictionary, SrcOptions};
use crate::data::{
    self, corrupt, load_dataset, synth_multisubspace, CorruptionKind, CorruptionSpec, DataError,
    DatasetManifest,
};
use crate::features;
use crate::pipeline::{self, ClassifierChoice, DictionarySource, PipelineOptions};
use crate::sample::SampleMatrix;
use crate::solver::{self, RecoveryResult, SolverConfig};

#[derive(Debug, Error)]
#[error("config line {line}: {message}")]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

fn config_error(line: usize, message: impl Into<String>) -> ConfigError {
    ConfigError {
        line,
        message: message.into(),
    }
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// The classification methods the harness compares.
///
/// The two recovery-based families differ in the incoherence weight
/// (`lrr-*` forces `eta = 0`) and in whether queries pass through the learned
/// corrector (`lrr-crc` skips it); the plain baselines skip recovery entirely
/// and fit PCA on the raw training matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    DlrrCr,
    DlrrSrc,
    LrrCr,
    LrrCrc,
    Crc,
    Src,
    Lrc,
    Nn,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::DlrrCr,
        Method::DlrrSrc,
        Method::LrrCr,
        Method::LrrCrc,
        Method::Crc,
        Method::Src,
        Method::Lrc,
        Method::Nn,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::DlrrCr => "dlrr-cr",
            Method::DlrrSrc => "dlrr-src",
            Method::LrrCr => "lrr-cr",
            Method::LrrCrc => "lrr-crc",
            Method::Crc => "crc",
            Method::Src => "src",
            Method::Lrc => "lrc",
            Method::Nn => "nn",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .iter()
            .find(|m| m.name() == s)
            .copied()
            .ok_or_else(|| format!("unknown method `{s}`"))
    }
}

/// Parameters of the synthetic data source.
#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub ambient_dim: usize,
    pub rank: usize,
    /// Total samples per class; the first `train_per_class` go to training.
    pub per_class: usize,
    pub train_per_class: usize,
    pub noise: f64,
    /// Constant factor applied to all samples. The generator emits unit-norm
    /// columns; raw-image workloads have much larger column norms, and the
    /// solver weights are calibrated against that scale, so pixel-like
    /// experiments set this to `ambient_dim.sqrt() * typical_pixel_value`.
    pub scale: f64,
}

#[derive(Debug, Clone)]
pub enum DataSource {
    Synthetic(SyntheticSpec),
    Manifest {
        path: PathBuf,
        geometry: (usize, usize),
        allow_resize: bool,
    },
}

/// Which split(s) corruption applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApplyTo {
    Train,
    Test,
    Both,
}

/// Corruption settings of a sweep; the per-seed corruption seeds derive from
/// the experiment seed (`2*seed + 1` for train, `2*seed + 2` for test).
#[derive(Debug, Clone)]
pub struct CorruptionPlan {
    pub kind: CorruptionKind,
    pub sample_fraction: f64,
    pub per_image_extent: f64,
    pub apply_to: ApplyTo,
    /// Image geometry for block corruption; defaults to the manifest
    /// geometry when the data source is a manifest.
    pub geometry: Option<(usize, usize)>,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub corruption: Option<CorruptionPlan>,
    pub methods: Vec<Method>,
    pub dims: Vec<usize>,
    pub seeds: Vec<u64>,
    pub solver: SolverConfig,
    /// Per-dimension overrides of the solver `lambda`.
    pub lambda_by_dim: BTreeMap<usize, f64>,
    pub beta: f64,
    pub src_lambda: f64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.methods.is_empty() {
            return Err(config_error(0, "at least one method is required"));
        }
        if self.dims.is_empty() {
            return Err(config_error(0, "at least one dim is required"));
        }
        if self.seeds.is_empty() {
            return Err(config_error(0, "at least one seed is required"));
        }
        self.solver
            .validate()
            .map_err(|e| config_error(0, e.to_string()))?;
        if !(self.beta > 0.0) {
            return Err(config_error(0, "beta must be positive"));
        }
        if !(self.src_lambda > 0.0) {
            return Err(config_error(0, "src_lambda must be positive"));
        }
        if let DataSource::Synthetic(s) = &self.data {
            if !(s.scale > 0.0) || !s.scale.is_finite() {
                return Err(config_error(0, "data scale must be positive"));
            }
        }
        if let Some(plan) = &self.corruption {
            if plan.kind == CorruptionKind::Block
                && plan.geometry.is_none()
                && matches!(self.data, DataSource::Synthetic(_))
            {
                return Err(config_error(
                    0,
                    "block corruption on synthetic data needs corruption.height/width",
                ));
            }
        }
        Ok(())
    }

    fn lambda_for(&self, dim: usize) -> f64 {
        *self.lambda_by_dim.get(&dim).unwrap_or(&self.solver.lambda)
    }

    fn corruption_geometry(&self) -> Option<(usize, usize)> {
        match &self.corruption {
            Some(plan) => plan.geometry.or(match &self.data {
                DataSource::Manifest { geometry, .. } => Some(*geometry),
                DataSource::Synthetic(_) => None,
            }),
            None => None,
        }
    }
}

// ---------------------------------------------------------------------------
// Config file parsing

struct RawConfig {
    // (section, key) -> (value, line)
    entries: BTreeMap<(String, String), (String, usize)>,
}

impl RawConfig {
    fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        let mut section = String::new();
        for (idx, raw_line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw_line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| config_error(line_no, "unterminated section header"))?;
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| config_error(line_no, "expected `key = value`"))?;
            if section.is_empty() {
                return Err(config_error(line_no, "key before any [section] header"));
            }
            let key = key.trim().to_string();
            let previous = entries.insert(
                (section.clone(), key.clone()),
                (value.trim().to_string(), line_no),
            );
            if previous.is_some() {
                return Err(config_error(line_no, format!("duplicate key `{key}`")));
            }
        }
        Ok(Self { entries })
    }

    fn take(&mut self, section: &str, key: &str) -> Option<(String, usize)> {
        self.entries
            .remove(&(section.to_string(), key.to_string()))
    }

    fn take_parsed<T: std::str::FromStr>(
        &mut self,
        section: &str,
        key: &str,
    ) -> Result<Option<T>, ConfigError> {
        match self.take(section, key) {
            None => Ok(None),
            Some((value, line)) => value.parse().map(Some).map_err(|_| {
                config_error(line, format!("could not parse `{value}` for key `{key}`"))
            }),
        }
    }

    fn require<T: std::str::FromStr>(
        &mut self,
        section: &str,
        key: &str,
    ) -> Result<T, ConfigError> {
        self.take_parsed(section, key)?
            .ok_or_else(|| config_error(0, format!("missing required key `{section}.{key}`")))
    }

    fn finish(self) -> Result<(), ConfigError> {
        if let Some(((section, key), (_, line))) = self.entries.into_iter().next() {
            return Err(config_error(line, format!("unknown key `{section}.{key}`")));
        }
        Ok(())
    }
}

fn parse_list<T: std::str::FromStr>(value: &str, line: usize) -> Result<Vec<T>, ConfigError> {
    value
        .split(',')
        .map(|v| {
            v.trim()
                .parse()
                .map_err(|_| config_error(line, format!("bad list entry `{}`", v.trim())))
        })
        .collect()
}

/// Parse an experiment config file. Relative manifest paths resolve against
/// `base_dir` (usually the config file's directory).
pub fn parse_config(text: &str, base_dir: &Path) -> Result<ExperimentConfig, ConfigError> {
    let mut raw = RawConfig::parse(text)?;

    let data = match raw.require::<String>("data", "kind")?.as_str() {
        "synthetic" => DataSource::Synthetic(SyntheticSpec {
            classes: raw.require("data", "classes")?,
            ambient_dim: raw.require("data", "ambient_dim")?,
            rank: raw.require("data", "rank")?,
            per_class: raw.require("data", "per_class")?,
            train_per_class: raw.require("data", "train_per_class")?,
            noise: raw.require("data", "noise")?,
            scale: raw.take_parsed("data", "scale")?.unwrap_or(1.0),
        }),
        "manifest" => DataSource::Manifest {
            path: base_dir.join(raw.require::<String>("data", "path")?),
            geometry: (
                raw.require("data", "height")?,
                raw.require("data", "width")?,
            ),
            allow_resize: raw.take_parsed("data", "allow_resize")?.unwrap_or(false),
        },
        other => return Err(config_error(0, format!("unknown data kind `{other}`"))),
    };

    let corruption = match raw.take("corruption", "kind") {
        None => None,
        Some((kind, line)) => {
            let kind = match kind.as_str() {
                "pixel" => CorruptionKind::Pixel,
                "block" => CorruptionKind::Block,
                other => {
                    return Err(config_error(line, format!("unknown corruption kind `{other}`")))
                }
            };
            let apply_to = match raw.take("corruption", "apply_to") {
                None => ApplyTo::Both,
                Some((v, line)) => match v.as_str() {
                    "train" => ApplyTo::Train,
                    "test" => ApplyTo::Test,
                    "both" => ApplyTo::Both,
                    other => {
                        return Err(config_error(line, format!("unknown apply_to `{other}`")))
                    }
                },
            };
            let height: Option<usize> = raw.take_parsed("corruption", "height")?;
            let width: Option<usize> = raw.take_parsed("corruption", "width")?;
            let geometry = match (height, width) {
                (Some(h), Some(w)) => Some((h, w)),
                (None, None) => None,
                _ => {
                    return Err(config_error(
                        0,
                        "corruption.height and corruption.width must be given together",
                    ))
                }
            };
            Some(CorruptionPlan {
                kind,
                // 10% corrupted samples unless overridden; the per-image
                // extent stays explicit
                sample_fraction: raw
                    .take_parsed("corruption", "sample_fraction")?
                    .unwrap_or(0.1),
                per_image_extent: raw.require("corruption", "per_image_extent")?,
                apply_to,
                geometry,
            })
        }
    };

    let (methods_value, methods_line) = raw
        .take("experiment", "methods")
        .ok_or_else(|| config_error(0, "missing required key `experiment.methods`"))?;
    let methods = parse_list::<Method>(&methods_value, methods_line)?;
    // the customary eigenface dimension grid when none is given
    let dims = match raw.take("experiment", "dims") {
        Some((value, line)) => parse_list::<usize>(&value, line)?,
        None => vec![25, 50, 75, 100, 200, 300],
    };
    let (seeds_value, seeds_line) = raw
        .take("experiment", "seeds")
        .ok_or_else(|| config_error(0, "missing required key `experiment.seeds`"))?;
    let seeds = parse_list::<u64>(&seeds_value, seeds_line)?;

    let defaults = SolverConfig::default();
    let solver = SolverConfig {
        lambda: raw.take_parsed("solver", "lambda")?.unwrap_or(defaults.lambda),
        eta: raw.take_parsed("solver", "eta")?.unwrap_or(defaults.eta),
        mu0: raw.take_parsed("solver", "mu0")?.unwrap_or(defaults.mu0),
        rho_growth: raw
            .take_parsed("solver", "rho_growth")?
            .unwrap_or(defaults.rho_growth),
        mu_max: raw.take_parsed("solver", "mu_max")?.unwrap_or(defaults.mu_max),
        epsilon: raw
            .take_parsed("solver", "epsilon")?
            .unwrap_or(defaults.epsilon),
        max_iter: raw
            .take_parsed("solver", "max_iter")?
            .unwrap_or(defaults.max_iter),
        outer_passes: raw
            .take_parsed("solver", "outer_passes")?
            .unwrap_or(defaults.outer_passes),
    };
    let mut lambda_by_dim = BTreeMap::new();
    for &dim in &dims {
        if let Some(lambda) = raw.take_parsed::<f64>("solver", &format!("lambda_dim_{dim}"))? {
            lambda_by_dim.insert(dim, lambda);
        }
    }
    let beta = raw.take_parsed("classifier", "beta")?.unwrap_or(1.1);
    let src_lambda = raw
        .take_parsed("classifier", "src_lambda")?
        .unwrap_or(0.001);
    raw.finish()?;

    let config = ExperimentConfig {
        data,
        corruption,
        methods,
        dims,
        seeds,
        solver,
        lambda_by_dim,
        beta,
        src_lambda,
    };
    config.validate()?;
    Ok(config)
}

// ---------------------------------------------------------------------------
// Sweep execution

/// One cell of the sweep.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub method: Method,
    pub dim: usize,
    pub seed: u64,
    pub outcome: Result<f64, String>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResults {
    /// Cells in methods-major, then dims, then seeds order (as configured).
    pub cells: Vec<CellResult>,
}

impl ExperimentResults {
    /// Long form: `method,dim,seed,accuracy` with `NA` for failed cells.
    pub fn long_csv(&self) -> String {
        let mut out = String::from("method,dim,seed,accuracy\n");
        for cell in &self.cells {
            let value = match &cell.outcome {
                Ok(a) => format!("{a:.6}"),
                Err(_) => "NA".to_string(),
            };
            out.push_str(&format!("{},{},{},{value}\n", cell.method, cell.dim, cell.seed));
        }
        out
    }

    /// Wide form: `method,dim,mean_accuracy` averaged over the seeds that
    /// produced a value.
    pub fn wide_csv(&self) -> String {
        let mut out = String::from("method,dim,mean_accuracy\n");
        let mut seen: Vec<(Method, usize)> = Vec::new();
        for cell in &self.cells {
            if !seen.contains(&(cell.method, cell.dim)) {
                seen.push((cell.method, cell.dim));
            }
        }
        for (method, dim) in seen {
            let values: Vec<f64> = self
                .cells
                .iter()
                .filter(|c| c.method == method && c.dim == dim)
                .filter_map(|c| c.outcome.as_ref().ok().copied())
                .collect();
            let cell = if values.is_empty() {
                "NA".to_string()
            } else {
                format!("{:.6}", values.iter().sum::<f64>() / values.len() as f64)
            };
            out.push_str(&format!("{method},{dim},{cell}\n"));
        }
        out
    }

    /// Failed cells as `method,dim,seed,error` rows, empty string when clean.
    pub fn errors_csv(&self) -> String {
        let failures: Vec<&CellResult> = self
            .cells
            .iter()
            .filter(|c| c.outcome.is_err())
            .collect();
        if failures.is_empty() {
            return String::new();
        }
        let mut out = String::from("method,dim,seed,error\n");
        for cell in failures {
            let message = cell
                .outcome
                .as_ref()
                .err()
                .unwrap()
                .replace(',', ";")
                .replace('\n', " ");
            out.push_str(&format!(
                "{},{},{},{message}\n",
                cell.method, cell.dim, cell.seed
            ));
        }
        out
    }

    /// Mean accuracy of one `(method, dim)` cell, if any seed produced one.
    pub fn mean_accuracy(&self, method: Method, dim: usize) -> Option<f64> {
        let values: Vec<f64> = self
            .cells
            .iter()
            .filter(|c| c.method == method && c.dim == dim)
            .filter_map(|c| c.outcome.as_ref().ok().copied())
            .collect();
        if values.is_empty() {
            None
        } else {
            Some(values.iter().sum::<f64>() / values.len() as f64)
        }
    }
}

struct SeedData {
    train: SampleMatrix,
    test: SampleMatrix,
}

fn prepare_seed_data(config: &ExperimentConfig, seed: u64) -> Result<SeedData, String> {
    let (train, test) = match &config.data {
        DataSource::Synthetic(s) => {
            let (all, _) = synth_multisubspace(
                s.classes,
                s.ambient_dim,
                s.rank,
                s.per_class,
                s.noise,
                seed,
            )
            .map_err(|e| e.to_string())?;
            let all = if s.scale != 1.0 {
                SampleMatrix::new(all.data() * s.scale, all.labels().to_vec())
                    .map_err(|e| e.to_string())?
            } else {
                all
            };
            all.split_per_class(s.train_per_class)
                .map_err(|e| e.to_string())?
        }
        DataSource::Manifest {
            path,
            geometry,
            allow_resize,
        } => {
            let manifest = DatasetManifest::from_csv(path, *geometry, *allow_resize)
                .map_err(|e| e.to_string())?;
            let (train, test) = load_dataset(&manifest).map_err(|e| e.to_string())?;
            let test = test.ok_or_else(|| "manifest has no test entries".to_string())?;
            (train, test)
        }
    };

    let (train, test) = match &config.corruption {
        None => (train, test),
        Some(plan) => {
            let geometry = config.corruption_geometry();
            let corrupt_split = |x: &SampleMatrix, seed: u64| -> Result<SampleMatrix, String> {
                let spec = CorruptionSpec {
                    kind: plan.kind,
                    sample_fraction: plan.sample_fraction,
                    per_image_extent: plan.per_image_extent,
                    rng_seed: seed,
                };
                corrupt(x, &spec, geometry, None).map_err(|e| e.to_string())
            };
            let train = if matches!(plan.apply_to, ApplyTo::Train | ApplyTo::Both) {
                corrupt_split(&train, seed.wrapping_mul(2).wrapping_add(1))?
            } else {
                train
            };
            let test = if matches!(plan.apply_to, ApplyTo::Test | ApplyTo::Both) {
                corrupt_split(&test, seed.wrapping_mul(2).wrapping_add(2))?
            } else {
                test
            };
            (train, test)
        }
    };
    Ok(SeedData { train, test })
}

fn recovery_based_accuracy(
    config: &ExperimentConfig,
    data: &SeedData,
    recovery: &RecoveryResult,
    lambda: f64,
    eta: f64,
    dim: usize,
    correct_queries: bool,
    choice: ClassifierChoice,
) -> Result<f64, String> {
    let options = PipelineOptions {
        solver: SolverConfig {
            lambda,
            eta,
            ..config.solver.clone()
        },
        dim,
        beta: config.beta,
        dictionary_source: DictionarySource::Original,
        correct_queries,
    };
    let model = pipeline::train_from_recovery(&data.train, recovery.clone(), &options)
        .map_err(|e| e.to_string())?;
    let report = pipeline::evaluate_matrix(&model, data.test.data(), data.test.labels(), choice)
        .map_err(|e| e.to_string())?;
    report.accuracy.ok_or_else(|| "no test queries".to_string())
}

fn baseline_accuracy(
    data: &SeedData,
    dim: usize,
    choice: ClassifierChoice,
) -> Result<f64, String> {
    let space = features::fit_pca(data.train.data(), dim).map_err(|e| e.to_string())?;
    let projected = space
        .project_matrix(data.train.data())
        .map_err(|e| e.to_string())?;
    let dict = Dictionary::new(projected, data.train.labels()).map_err(|e| e.to_string())?;
    let queries = space
        .project_matrix(data.test.data())
        .map_err(|e| e.to_string())?;
    let results = match choice {
        ClassifierChoice::Crc { beta } => {
            let c = dict.crc(beta).map_err(|e| e.to_string())?;
            classify_batch(&c, &queries)
        }
        ClassifierChoice::Src { lambda } => {
            let c = dict
                .src(SrcOptions {
                    lambda,
                    ..SrcOptions::default()
                })
                .map_err(|e| e.to_string())?;
            classify_batch(&c, &queries)
        }
        ClassifierChoice::Lrc => {
            let c = dict.lrc().map_err(|e| e.to_string())?;
            classify_batch(&c, &queries)
        }
        ClassifierChoice::Nn => classify_batch(&dict.nn(), &queries),
    };
    let mut correct = 0;
    for (index, result) in results.iter().enumerate() {
        let outcome = result
            .as_ref()
            .map_err(|e| format!("query {index}: {e}"))?;
        if outcome.predicted_class == data.test.labels()[index] {
            correct += 1;
        }
    }
    Ok(correct as f64 / results.len() as f64)
}

fn run_seed(config: &ExperimentConfig, seed: u64) -> Vec<CellResult> {
    let mut cells = Vec::with_capacity(config.methods.len() * config.dims.len());
    let data = match prepare_seed_data(config, seed) {
        Ok(data) => data,
        Err(message) => {
            for &method in &config.methods {
                for &dim in &config.dims {
                    cells.push(CellResult {
                        method,
                        dim,
                        seed,
                        outcome: Err(message.clone()),
                    });
                }
            }
            return cells;
        }
    };

    // recoveries are dim-independent; cache per (eta-on, lambda)
    let mut recoveries: BTreeMap<(bool, u64), Result<RecoveryResult, String>> = BTreeMap::new();
    let mut recovery_for = |with_eta: bool, lambda: f64, train: &SampleMatrix| {
        recoveries
            .entry((with_eta, lambda.to_bits()))
            .or_insert_with(|| {
                let solver_config = SolverConfig {
                    lambda,
                    eta: if with_eta { config.solver.eta } else { 0.0 },
                    ..config.solver.clone()
                };
                solver::recover_dictionary(train, &solver_config).map_err(|e| e.to_string())
            })
            .clone()
    };

    for &method in &config.methods {
        for &dim in &config.dims {
            let lambda = config.lambda_for(dim);
            let crc = ClassifierChoice::Crc { beta: config.beta };
            let src = ClassifierChoice::Src {
                lambda: config.src_lambda,
            };
            let outcome = match method {
                Method::DlrrCr | Method::DlrrSrc => {
                    let choice = if method == Method::DlrrCr { crc } else { src };
                    recovery_for(true, lambda, &data.train).and_then(|recovery| {
                        recovery_based_accuracy(
                            config,
                            &data,
                            &recovery,
                            lambda,
                            config.solver.eta,
                            dim,
                            true,
                            choice,
                        )
                    })
                }
                Method::LrrCr | Method::LrrCrc => {
                    let correct_queries = method == Method::LrrCr;
                    recovery_for(false, lambda, &data.train).and_then(|recovery| {
                        recovery_based_accuracy(
                            config,
                            &data,
                            &recovery,
                            lambda,
                            0.0,
                            dim,
                            correct_queries,
                            crc,
                        )
                    })
                }
                Method::Crc => baseline_accuracy(&data, dim, crc),
                Method::Src => baseline_accuracy(&data, dim, src),
                Method::Lrc => baseline_accuracy(&data, dim, ClassifierChoice::Lrc),
                Method::Nn => baseline_accuracy(&data, dim, ClassifierChoice::Nn),
            };
            cells.push(CellResult {
                method,
                dim,
                seed,
                outcome,
            });
        }
    }
    cells
}

/// Run the full sweep. Independent seeds execute in parallel under the
/// `parallel` feature; results are identical either way.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResults, ExperimentError> {
    config.validate()?;
    let per_seed: Vec<Vec<CellResult>> = run_seeds(config);

    // reorder into methods-major layout for stable CSV emission
    let cells_per_seed = config.methods.len() * config.dims.len();
    let mut cells = Vec::with_capacity(cells_per_seed * config.seeds.len());
    for flat in 0..cells_per_seed {
        for seed_cells in &per_seed {
            cells.push(seed_cells[flat].clone());
        }
    }
    Ok(ExperimentResults { cells })
}

#[cfg(feature = "parallel")]
fn run_seeds(config: &ExperimentConfig) -> Vec<Vec<CellResult>> {
    use rayon::prelude::*;
    config
        .seeds
        .par_iter()
        .map(|&seed| run_seed(config, seed))
        .collect()
}

#[cfg(not(feature = "parallel"))]
fn run_seeds(config: &ExperimentConfig) -> Vec<Vec<CellResult>> {
    config
        .seeds
        .iter()
        .map(|&seed| run_seed(config, seed))
        .collect()
}

// ---------------------------------------------------------------------------
// Corruption command

/// Input of [`corrupt_command`].
#[derive(Debug, Clone)]
pub enum CorruptInput {
    /// A bare matrix container; columns are treated as unlabeled samples.
    MatrixFile(PathBuf),
    /// A dataset directory holding `samples.mat` and `labels.csv`.
    DatasetDir(PathBuf),
    /// A manifest; train and test splits are corrupted separately with seeds
    /// `rng_seed` and `rng_seed + 1`.
    Manifest {
        path: PathBuf,
        geometry: (usize, usize),
        allow_resize: bool,
    },
}

/// Write a corrupted copy of the input plus a sidecar recording the exact
/// spec and seeds, sufficient to regenerate the artifact.
pub fn corrupt_command(
    input: &CorruptInput,
    spec: &CorruptionSpec,
    geometry: Option<(usize, usize)>,
    occluder: Option<&DMatrix<f64>>,
    out_dir: &Path,
) -> Result<(), ExperimentError> {
    fs::create_dir_all(out_dir).map_err(|e| DataError::Io {
        path: out_dir.to_path_buf(),
        source: e,
    })?;
    let mut sidecar = String::new();
    sidecar.push_str(&format!(
        "kind = {}\n",
        match spec.kind {
            CorruptionKind::Pixel => "pixel",
            CorruptionKind::Block => "block",
        }
    ));
    sidecar.push_str(&format!("sample_fraction = {}\n", spec.sample_fraction));
    sidecar.push_str(&format!("per_image_extent = {}\n", spec.per_image_extent));
    sidecar.push_str(&format!("rng_seed = {}\n", spec.rng_seed));
    if let Some((h, w)) = geometry {
        sidecar.push_str(&format!("geometry = {h}x{w}\n"));
    }

    match input {
        CorruptInput::MatrixFile(path) => {
            sidecar.push_str(&format!("input = {}\n", path.display()));
            let matrix = data::load_matrix(path)?;
            let labels = vec![0; matrix.ncols()];
            let samples = SampleMatrix::new(matrix, labels).map_err(DataError::Sample)?;
            let corrupted = corrupt(&samples, spec, geometry, occluder)?;
            data::save_matrix(&out_dir.join("samples.mat"), corrupted.data())?;
        }
        CorruptInput::DatasetDir(path) => {
            sidecar.push_str(&format!("input = {}\n", path.display()));
            let samples = data::load_dataset_dir(path)?;
            let corrupted = corrupt(&samples, spec, geometry, occluder)?;
            data::save_dataset_dir(out_dir, &corrupted)?;
        }
        CorruptInput::Manifest {
            path,
            geometry: manifest_geometry,
            allow_resize,
        } => {
            sidecar.push_str(&format!("input = {}\n", path.display()));
            sidecar.push_str(&format!("test_rng_seed = {}\n", spec.rng_seed.wrapping_add(1)));
            let manifest = DatasetManifest::from_csv(path, *manifest_geometry, *allow_resize)?;
            let (train, test) = load_dataset(&manifest)?;
            let block_geometry = geometry.or(Some(*manifest_geometry));
            let corrupted_train = corrupt(&train, spec, block_geometry, occluder)?;
            data::save_matrix(&out_dir.join("train.mat"), corrupted_train.data())?;
            write_labels(&out_dir.join("train_labels.csv"), corrupted_train.labels())?;
            if let Some(test) = test {
                let test_spec = CorruptionSpec {
                    rng_seed: spec.rng_seed.wrapping_add(1),
                    ..spec.clone()
                };
                let corrupted_test = corrupt(&test, &test_spec, block_geometry, occluder)?;
                data::save_matrix(&out_dir.join("test.mat"), corrupted_test.data())?;
                write_labels(&out_dir.join("test_labels.csv"), corrupted_test.labels())?;
            }
        }
    }
    fs::write(out_dir.join("corruption.txt"), sidecar).map_err(|e| DataError::Io {
        path: out_dir.join("corruption.txt"),
        source: e,
    })?;
    Ok(())
}

fn write_labels(path: &Path, labels: &[usize]) -> Result<(), DataError> {
    let text: String = labels.iter().map(|l| format!("{l}\n")).collect();
    fs::write(path, text).map_err(|e| DataError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn scratch_dir(tag: &str) -> PathBuf {
        static COUNTER: AtomicUsize = AtomicUsize::new(0);
        let id = COUNTER.fetch_add(1, Ordering::SeqCst);
        let dir = std::env::temp_dir().join(format!(
            "dlrr-experiment-test-{}-{}-{}",
            std::process::id(),
            tag,
            id
        ));
        fs::create_dir_all(&dir).unwrap();
        dir
    }

    const TINY_CONFIG: &str = "\
[data]
kind = synthetic
classes = 2
ambient_dim = 16
rank = 1
per_class = 6
train_per_class = 4
noise = 0.01

[experiment]
methods = nn
dims = 2
seeds = 7
";

    #[test]
    fn parses_a_full_config() {
        let text = "\
# sweep settings
[data]
kind = synthetic
classes = 3
ambient_dim = 64
rank = 2
per_class = 20
train_per_class = 15
noise = 0.02

[corruption]
kind = block
sample_fraction = 0.2
per_image_extent = 0.25
apply_to = both
height = 8
width = 8

[experiment]
methods = dlrr-cr,crc,nn
dims = 5,10
seeds = 1,2,3

[solver]
lambda = 0.1
eta = 0.001
lambda_dim_10 = 0.05

[classifier]
beta = 1.1
src_lambda = 0.001
";
        let config = parse_config(text, Path::new(".")).unwrap();
        assert_eq!(config.methods, vec![Method::DlrrCr, Method::Crc, Method::Nn]);
        assert_eq!(config.dims, vec![5, 10]);
        assert_eq!(config.seeds, vec![1, 2, 3]);
        assert_eq!(config.lambda_for(5), 0.1);
        assert_eq!(config.lambda_for(10), 0.05);
        assert_eq!(config.beta, 1.1);
        let plan = config.corruption.as_ref().unwrap();
        assert_eq!(plan.geometry, Some((8, 8)));
        assert_eq!(plan.apply_to, ApplyTo::Both);
    }

    #[test]
    fn dims_default_to_the_standard_grid() {
        let text = TINY_CONFIG.replace("dims = 2\n", "");
        let config = parse_config(&text, Path::new(".")).unwrap();
        assert_eq!(config.dims, vec![25, 50, 75, 100, 200, 300]);
    }

    #[test]
    fn rejects_unknown_keys_and_sections() {
        let unknown_key = format!("{TINY_CONFIG}\n[solver]\nlambda = 0.1\ntypo_key = 3\n");
        let err = parse_config(&unknown_key, Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("typo_key"), "{err}");

        let unknown_section = format!("{TINY_CONFIG}\n[mystery]\nvalue = 1\n");
        assert!(parse_config(&unknown_section, Path::new(".")).is_err());

        let bad_method = TINY_CONFIG.replace("methods = nn", "methods = knn");
        assert!(parse_config(&bad_method, Path::new(".")).is_err());
    }

    #[test]
    fn block_corruption_on_synthetic_data_requires_geometry() {
        let text = format!(
            "{TINY_CONFIG}
[corruption]
kind = block
sample_fraction = 0.5
per_image_extent = 0.5
"
        );
        assert!(parse_config(&text, Path::new(".")).is_err());
    }

    #[test]
    fn degenerate_sweep_matches_a_direct_baseline_call() {
        let config = parse_config(TINY_CONFIG, Path::new(".")).unwrap();
        let results = run_experiment(&config).unwrap();
        assert_eq!(results.cells.len(), 1);
        let sweep_accuracy = *results.cells[0].outcome.as_ref().unwrap();

        let data = prepare_seed_data(&config, 7).unwrap();
        let direct = baseline_accuracy(&data, 2, ClassifierChoice::Nn).unwrap();
        assert_eq!(sweep_accuracy, direct);
    }

    #[test]
    fn rerun_emits_bit_identical_csvs() {
        let text = TINY_CONFIG.replace("methods = nn", "methods = nn,crc,lrc");
        let config = parse_config(&text, Path::new(".")).unwrap();
        let a = run_experiment(&config).unwrap();
        let b = run_experiment(&config).unwrap();
        assert_eq!(a.long_csv(), b.long_csv());
        assert_eq!(a.wide_csv(), b.wide_csv());
        assert!(a.long_csv().starts_with("method,dim,seed,accuracy\n"));
        assert!(a.errors_csv().is_empty());
    }

    #[test]
    fn failed_cells_are_recorded_without_aborting() {
        // dim larger than the available variance directions fails per cell
        let text = TINY_CONFIG
            .replace("dims = 2", "dims = 2,12")
            .replace("methods = nn", "methods = nn,crc");
        let config = parse_config(&text, Path::new(".")).unwrap();
        let results = run_experiment(&config).unwrap();
        assert_eq!(results.cells.len(), 4);
        let failed: Vec<&CellResult> = results
            .cells
            .iter()
            .filter(|c| c.outcome.is_err())
            .collect();
        assert_eq!(failed.len(), 2);
        assert!(failed.iter().all(|c| c.dim == 12));
        assert!(results.errors_csv().starts_with("method,dim,seed,error\n"));
        assert!(results.long_csv().contains(",NA"));
        // the healthy dim still produced numbers
        assert!(results.mean_accuracy(Method::Nn, 2).is_some());
        assert!(results.mean_accuracy(Method::Nn, 12).is_none());
    }

    #[test]
    fn corrupt_command_with_zero_fraction_copies_the_payload() {
        let dir = scratch_dir("corrupt-zero");
        let m = DMatrix::from_fn(6, 4, |i, j| (i + j) as f64 / 10.0);
        let input_path = dir.join("input.mat");
        data::save_matrix(&input_path, &m).unwrap();
        let spec = CorruptionSpec {
            kind: CorruptionKind::Pixel,
            sample_fraction: 0.0,
            per_image_extent: 0.5,
            rng_seed: 5,
        };
        let out = dir.join("out");
        corrupt_command(
            &CorruptInput::MatrixFile(input_path.clone()),
            &spec,
            None,
            None,
            &out,
        )
        .unwrap();
        let input_bytes = fs::read(&input_path).unwrap();
        let output_bytes = fs::read(out.join("samples.mat")).unwrap();
        assert_eq!(input_bytes, output_bytes);
        let sidecar = fs::read_to_string(out.join("corruption.txt")).unwrap();
        assert!(sidecar.contains("rng_seed = 5"));
    }

    #[test]
    fn corrupt_command_sidecar_allows_exact_regeneration() {
        let dir = scratch_dir("corrupt-regen");
        let m = DMatrix::from_fn(9, 5, |i, j| ((i * 5 + j) % 4) as f64 / 4.0);
        let input_path = dir.join("input.mat");
        data::save_matrix(&input_path, &m).unwrap();
        let spec = CorruptionSpec {
            kind: CorruptionKind::Pixel,
            sample_fraction: 0.4,
            per_image_extent: 0.3,
            rng_seed: 99,
        };
        let out_a = dir.join("a");
        let out_b = dir.join("b");
        let input = CorruptInput::MatrixFile(input_path);
        corrupt_command(&input, &spec, None, None, &out_a).unwrap();
        // regenerate from the recorded spec
        corrupt_command(&input, &spec, None, None, &out_b).unwrap();
        assert_eq!(
            fs::read(out_a.join("samples.mat")).unwrap(),
            fs::read(out_b.join("samples.mat")).unwrap()
        );
    }
}
