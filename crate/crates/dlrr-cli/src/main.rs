//! Experiment runner: dataset synthesis and corruption, dictionary recovery,
//! pipeline training, prediction, evaluation, and benchmark sweeps.
//!
//! Exit codes: 0 on success, 1 for configuration errors, 2 for data errors,
//! 3 for solver or numerical failures.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;

use dlrr::classifiers::write_outcomes_csv;
use dlrr::data::{
    self, load_dataset, synth_multisubspace, CorruptionKind, CorruptionSpec, DataError,
    DatasetManifest,
};
use dlrr::experiment::{
    corrupt_command, parse_config, run_experiment, CorruptInput, ExperimentError,
};
use dlrr::pipeline::{self, DictionarySource, PipelineError, PipelineOptions, TrainedModel};
use dlrr::solver::{CsvTraceSink, SolverConfig};
use dlrr::SampleMatrix;

#[derive(Parser)]
#[command(
    name = "dlrr",
    about = "Robust classification under corrupted training and test data",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic multi-subspace samples with ground truth.
    Synth(SynthArgs),
    /// Recover the clean per-class dictionary from training data.
    Recover(RecoverArgs),
    /// Train the full recovery + projection + PCA + CRC pipeline.
    Train(TrainArgs),
    /// Classify query columns with a trained model.
    Predict(PredictArgs),
    /// Evaluate a trained model on labeled data.
    Evaluate(EvaluateArgs),
    /// Write an artificially corrupted copy of a dataset.
    Corrupt(CorruptArgs),
    /// Run a methods x dims x seeds accuracy sweep from a config file.
    Benchmark(BenchmarkArgs),
}

#[derive(Args)]
struct DataInput {
    /// Dataset directory holding samples.mat and labels.csv.
    #[arg(long, value_name = "DIR", conflicts_with = "manifest")]
    data: Option<PathBuf>,
    /// Dataset manifest CSV with header `path,label,split`.
    #[arg(long, value_name = "FILE", requires = "height", requires = "width")]
    manifest: Option<PathBuf>,
    /// Image height after preprocessing (manifest input).
    #[arg(long)]
    height: Option<usize>,
    /// Image width after preprocessing (manifest input).
    #[arg(long)]
    width: Option<usize>,
    /// Resample images whose geometry differs from --height/--width.
    #[arg(long)]
    allow_resize: bool,
}

impl DataInput {
    /// Load (train, test) samples; dataset directories have no test split.
    fn load(&self) -> Result<(SampleMatrix, Option<SampleMatrix>), CliError> {
        match (&self.data, &self.manifest) {
            (Some(dir), None) => Ok((data::load_dataset_dir(dir)?, None)),
            (None, Some(path)) => {
                let geometry = (self.height.unwrap(), self.width.unwrap());
                let manifest = DatasetManifest::from_csv(path, geometry, self.allow_resize)?;
                Ok(load_dataset(&manifest)?)
            }
            _ => Err(CliError::Config(
                "exactly one of --data or --manifest is required".to_string(),
            )),
        }
    }
}

#[derive(Args)]
struct SolverArgs {
    /// Weight of the column-sparse error term.
    #[arg(long, default_value_t = 0.02)]
    lambda: f64,
    /// Weight of the structural-incoherence coupling (0 disables it).
    #[arg(long, default_value_t = 0.001)]
    eta: f64,
    #[arg(long, default_value_t = 1e-6)]
    mu0: f64,
    #[arg(long, default_value_t = 1.1)]
    rho_growth: f64,
    #[arg(long, default_value_t = 1e10)]
    mu_max: f64,
    #[arg(long, default_value_t = 1e-3)]
    epsilon: f64,
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
    #[arg(long, default_value_t = 1)]
    outer_passes: usize,
}

impl SolverArgs {
    fn to_config(&self) -> SolverConfig {
        SolverConfig {
            lambda: self.lambda,
            eta: self.eta,
            mu0: self.mu0,
            rho_growth: self.rho_growth,
            mu_max: self.mu_max,
            epsilon: self.epsilon,
            max_iter: self.max_iter,
            outer_passes: self.outer_passes,
        }
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 3)]
    classes: usize,
    #[arg(long, default_value_t = 100)]
    ambient_dim: usize,
    #[arg(long, default_value_t = 2)]
    rank: usize,
    #[arg(long, default_value_t = 20)]
    per_class: usize,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Constant factor applied to the unit-norm samples (raw-image workloads
    /// have column norms well above one).
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory (samples.mat, labels.csv, clean.mat).
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args)]
struct RecoverArgs {
    #[command(flatten)]
    input: DataInput,
    #[command(flatten)]
    solver: SolverArgs,
    /// Write per-iteration solver trace CSV into the output directory.
    #[arg(long)]
    trace: bool,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    input: DataInput,
    #[command(flatten)]
    solver: SolverArgs,
    /// PCA feature dimension.
    #[arg(long)]
    dim: usize,
    /// Ridge weight of the collaborative-representation stage.
    #[arg(long, default_value_t = 1.1)]
    beta: f64,
    /// Build the classification dictionary from `original` or `clean` samples.
    #[arg(long, default_value = "original")]
    dictionary_source: String,
    /// Skip the learned query corrector at prediction time.
    #[arg(long)]
    no_correction: bool,
    #[arg(long)]
    trace: bool,
    /// Model output directory.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    /// Trained model directory.
    #[arg(long, value_name = "DIR")]
    model: PathBuf,
    /// Matrix container of query columns.
    #[arg(long, value_name = "FILE")]
    queries: PathBuf,
    /// Override the model's ridge weight.
    #[arg(long)]
    beta: Option<f64>,
    /// Output CSV path; stdout when omitted.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long, value_name = "DIR")]
    model: PathBuf,
    #[command(flatten)]
    input: DataInput,
    #[arg(long)]
    beta: Option<f64>,
    /// Per-query outcome CSV path.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CorruptArgs {
    /// Input: matrix container (.mat), dataset directory, or manifest (.csv).
    #[arg(long, value_name = "PATH")]
    input: PathBuf,
    /// Corruption kind: pixel or block.
    #[arg(long)]
    kind: String,
    /// Fraction of samples to corrupt, in [0, 1].
    #[arg(long)]
    fraction: f64,
    /// Pixel fraction per image, or block side as a fraction of the image
    /// side; in (0, 1].
    #[arg(long)]
    extent: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Image height (required for block corruption of matrix inputs, and for
    /// manifest inputs).
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    /// Matrix container used as the block occluder (checkerboard default).
    #[arg(long, value_name = "FILE")]
    occluder: Option<PathBuf>,
    #[arg(long)]
    allow_resize: bool,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args)]
struct BenchmarkArgs {
    /// Experiment config file.
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
    /// Output directory for accuracy_long.csv / accuracy_wide.csv.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

enum CliError {
    Config(String),
    Data(String),
    Solver(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Solver(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Data(m) | CliError::Solver(m) => m,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Config(c) => CliError::Config(c.to_string()),
            ExperimentError::Data(d) => CliError::Data(d.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match &e {
            PipelineError::InvalidOptions(_) | PipelineError::Features(_) => {
                CliError::Config(e.to_string())
            }
            PipelineError::Model(_) => CliError::Data(e.to_string()),
            _ => CliError::Solver(e.to_string()),
        }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth(args) => run_synth(args),
        Command::Recover(args) => run_recover(args),
        Command::Train(args) => run_train(args),
        Command::Predict(args) => run_predict(args),
        Command::Evaluate(args) => run_evaluate(args),
        Command::Corrupt(args) => run_corrupt(args),
        Command::Benchmark(args) => run_benchmark(args),
    }
}

fn run_synth(args: SynthArgs) -> Result<(), CliError> {
    if !(args.scale > 0.0) || !args.scale.is_finite() {
        return Err(CliError::Config("--scale must be positive".to_string()));
    }
    let (samples, clean) = synth_multisubspace(
        args.classes,
        args.ambient_dim,
        args.rank,
        args.per_class,
        args.noise,
        args.seed,
    )
    .map_err(|e| CliError::Config(e.to_string()))?;
    let (samples, clean) = if args.scale != 1.0 {
        (
            SampleMatrix::new(samples.data() * args.scale, samples.labels().to_vec())
                .map_err(|e| CliError::Data(e.to_string()))?,
            clean * args.scale,
        )
    } else {
        (samples, clean)
    };
    data::save_dataset_dir(&args.out, &samples)?;
    data::save_matrix(&args.out.join("clean.mat"), &clean)?;
    println!(
        "wrote {} samples of dimension {} ({} classes) to {}",
        samples.n_samples(),
        samples.dim(),
        samples.n_classes(),
        args.out.display()
    );
    Ok(())
}

fn open_trace(
    enabled: bool,
    out: &Path,
) -> Result<Option<CsvTraceSink<fs::File>>, CliError> {
    if !enabled {
        return Ok(None);
    }
    fs::create_dir_all(out).map_err(|e| io_error(out, e))?;
    let path = out.join("trace.csv");
    let file = fs::File::create(&path).map_err(|e| io_error(&path, e))?;
    Ok(Some(CsvTraceSink::new(file)))
}

fn run_recover(args: RecoverArgs) -> Result<(), CliError> {
    let (train, _) = args.input.load()?;
    let config = args.solver.to_config();
    let mut trace = open_trace(args.trace, &args.out)?;
    let recovery = dlrr::solver::recover_dictionary_traced(&train, &config, trace.as_mut())
        .map_err(|e| CliError::Solver(e.to_string()))?;
    if let Some(sink) = trace {
        let file = sink.finish().map_err(|e| io_error(&args.out, e))?;
        drop(file);
    }
    fs::create_dir_all(&args.out).map_err(|e| io_error(&args.out, e))?;
    data::save_matrix(&args.out.join("clean_dictionary.mat"), &recovery.clean_dictionary)?;
    for (idx, id) in recovery.class_ids.iter().enumerate() {
        data::save_matrix(
            &args.out.join(format!("class_{id}_z.mat")),
            &recovery.per_class_z[idx],
        )?;
        data::save_matrix(
            &args.out.join(format!("class_{id}_e.mat")),
            &recovery.per_class_e[idx],
        )?;
        println!(
            "class {id}: {} iterations, converged = {}",
            recovery.objective_traces[idx].len(),
            recovery.converged[idx]
        );
    }
    println!("clean dictionary written to {}", args.out.display());
    Ok(())
}

fn run_train(args: TrainArgs) -> Result<(), CliError> {
    let (train, _) = args.input.load()?;
    let dictionary_source: DictionarySource = args
        .dictionary_source
        .parse()
        .map_err(CliError::Config)?;
    let options = PipelineOptions {
        solver: args.solver.to_config(),
        dim: args.dim,
        beta: args.beta,
        dictionary_source,
        correct_queries: !args.no_correction,
    };
    let mut trace = open_trace(args.trace, &args.out)?;
    let model = pipeline::train_traced(&train, &options, trace.as_mut())?;
    if let Some(sink) = trace {
        sink.finish().map_err(|e| io_error(&args.out, e))?;
    }
    model.save(&args.out)?;
    println!(
        "model trained on {} samples ({} classes), dim {}; saved to {}",
        train.n_samples(),
        train.n_classes(),
        args.dim,
        args.out.display()
    );
    Ok(())
}

fn run_predict(args: PredictArgs) -> Result<(), CliError> {
    let model = TrainedModel::load(&args.model)?;
    let queries = data::load_matrix(&args.queries)?;
    let beta = args.beta.unwrap_or(model.options.beta);
    let mut outcomes = Vec::with_capacity(queries.ncols());
    for j in 0..queries.ncols() {
        let outcome = pipeline::predict(&model, &queries.column(j).into_owned(), beta)
            .map_err(|e| CliError::Solver(format!("query {j}: {e}")))?;
        outcomes.push(outcome);
    }
    let mut bytes = Vec::new();
    write_outcomes_csv(&mut bytes, &outcomes, None)
        .map_err(|e| CliError::Data(e.to_string()))?;
    match &args.out {
        Some(path) => fs::write(path, bytes).map_err(|e| io_error(path, e))?,
        None => print!("{}", String::from_utf8_lossy(&bytes)),
    }
    Ok(())
}

fn run_evaluate(args: EvaluateArgs) -> Result<(), CliError> {
    let model = TrainedModel::load(&args.model)?;
    let beta = args.beta.unwrap_or(model.options.beta);
    let (first, second) = args.input.load()?;
    // manifest input evaluates its test split; dataset dirs evaluate all columns
    let queries = match second {
        Some(test) => test,
        None => first,
    };
    let report = pipeline::evaluate(&model, &queries, beta)?;
    match report.accuracy {
        Some(accuracy) => println!(
            "accuracy: {:.4} ({}/{} queries)",
            accuracy,
            report.correct,
            report.n_queries()
        ),
        None => println!("accuracy: undefined (0 queries)"),
    }
    for (class, (correct, total)) in &report.per_class {
        println!("class {class}: {correct}/{total}");
    }
    if let Some(path) = &args.out {
        let mut bytes = Vec::new();
        report
            .write_csv(&mut bytes)
            .map_err(|e| CliError::Data(e.to_string()))?;
        fs::write(path, bytes).map_err(|e| io_error(path, e))?;
        println!("per-query outcomes written to {}", path.display());
    }
    Ok(())
}

fn run_corrupt(args: CorruptArgs) -> Result<(), CliError> {
    let kind = match args.kind.as_str() {
        "pixel" => CorruptionKind::Pixel,
        "block" => CorruptionKind::Block,
        other => {
            return Err(CliError::Config(format!(
                "unknown corruption kind `{other}` (expected pixel or block)"
            )))
        }
    };
    let spec = CorruptionSpec {
        kind,
        sample_fraction: args.fraction,
        per_image_extent: args.extent,
        rng_seed: args.seed,
    };
    let geometry = match (args.height, args.width) {
        (Some(h), Some(w)) => Some((h, w)),
        (None, None) => None,
        _ => {
            return Err(CliError::Config(
                "--height and --width must be given together".to_string(),
            ))
        }
    };
    let occluder: Option<DMatrix<f64>> = match &args.occluder {
        Some(path) => Some(data::load_matrix(path)?),
        None => None,
    };
    let input = if args.input.is_dir() {
        CorruptInput::DatasetDir(args.input.clone())
    } else if args.input.extension().and_then(|e| e.to_str()) == Some("csv") {
        let geometry = geometry.ok_or_else(|| {
            CliError::Config("manifest input requires --height and --width".to_string())
        })?;
        CorruptInput::Manifest {
            path: args.input.clone(),
            geometry,
            allow_resize: args.allow_resize,
        }
    } else {
        CorruptInput::MatrixFile(args.input.clone())
    };
    corrupt_command(&input, &spec, geometry, occluder.as_ref(), &args.out)?;
    println!("corrupted copy written to {}", args.out.display());
    Ok(())
}

fn run_benchmark(args: BenchmarkArgs) -> Result<(), CliError> {
    let text = fs::read_to_string(&args.config).map_err(|e| io_error(&args.config, e))?;
    let base = args.config.parent().unwrap_or(Path::new(""));
    let config = parse_config(&text, base).map_err(|e| CliError::Config(e.to_string()))?;
    let results = run_experiment(&config)?;
    fs::create_dir_all(&args.out).map_err(|e| io_error(&args.out, e))?;
    let long_path = args.out.join("accuracy_long.csv");
    fs::write(&long_path, results.long_csv()).map_err(|e| io_error(&long_path, e))?;
    let wide_path = args.out.join("accuracy_wide.csv");
    fs::write(&wide_path, results.wide_csv()).map_err(|e| io_error(&wide_path, e))?;
    let errors = results.errors_csv();
    if !errors.is_empty() {
        let errors_path = args.out.join("errors.csv");
        fs::write(&errors_path, errors).map_err(|e| io_error(&errors_path, e))?;
        eprintln!("some cells failed; see {}", args.out.join("errors.csv").display());
    }
    print!("{}", results.wide_csv());
    println!("results written to {}", args.out.display());
    Ok(())
}
