//! Dataset ingestion, manifest-driven splits, corruption generators and the
//! synthetic multi-subspace generator.
//!
//! Datasets are described by a UTF-8 CSV manifest with the exact header
//! `path,label,split`; image paths are resolved relative to the manifest
//! file. Images are decoded to grayscale, scaled to `[0, 1]` and vectorized
//! column-major (image columns stacked). All randomness is driven by explicit
//! integer seeds.

mod container;
mod pgm;

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::sample::{SampleError, SampleMatrix};

pub use container::{load_matrix, read_matrix_from, save_matrix, write_matrix_to, MATRIX_MAGIC};
pub use pgm::{read_pgm, write_pgm, GrayImage};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Image { path: PathBuf, message: String },
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("{path}: geometry {found:?} does not match manifest geometry {expected:?} and resizing is not permitted")]
    Geometry {
        path: PathBuf,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("matrix container: {message}")]
    Container { message: String },
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error("{message}")]
    InvalidParam { message: String },
    #[error("label {label} appears only in the test split")]
    LabelMissingFromTrain { label: usize },
    #[error("manifest has no train entries")]
    EmptyTrain,
}

fn invalid(message: impl Into<String>) -> DataError {
    DataError::InvalidParam {
        message: message.into(),
    }
}

/// Which split a manifest entry belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: usize,
    pub split: Split,
}

/// A parsed dataset manifest plus the target image geometry.
#[derive(Debug, Clone)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    /// (height, width) every image is brought to before vectorization.
    pub image_geometry: (usize, usize),
    /// Resample images whose native geometry differs; error otherwise.
    pub allow_resize: bool,
}

impl DatasetManifest {
    /// Parse a manifest CSV. Strict: the header must be exactly
    /// `path,label,split`, fields may not be quoted, and every label that
    /// appears anywhere must appear in the train split.
    pub fn from_csv(
        path: &Path,
        image_geometry: (usize, usize),
        allow_resize: bool,
    ) -> Result<Self, DataError> {
        let text = fs::read_to_string(path).map_err(|e| DataError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
        Self::parse(&text, &base, image_geometry, allow_resize)
    }

    pub fn parse(
        text: &str,
        base_dir: &Path,
        image_geometry: (usize, usize),
        allow_resize: bool,
    ) -> Result<Self, DataError> {
        if image_geometry.0 == 0 || image_geometry.1 == 0 {
            return Err(invalid("image geometry must be positive"));
        }
        let manifest_err = |line: usize, message: &str| DataError::Manifest {
            line,
            message: message.to_string(),
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, header)) if header.trim_end() == "path,label,split" => {}
            _ => return Err(manifest_err(1, "header must be exactly `path,label,split`")),
        }
        let mut entries = Vec::new();
        for (idx, line) in lines {
            let line_no = idx + 1;
            let line = line.trim_end();
            if line.is_empty() {
                continue;
            }
            if line.contains('"') {
                return Err(manifest_err(line_no, "quoted fields are not supported"));
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(manifest_err(line_no, "expected 3 comma-separated fields"));
            }
            if fields[0].is_empty() {
                return Err(manifest_err(line_no, "empty path"));
            }
            let label: usize = fields[1]
                .parse()
                .map_err(|_| manifest_err(line_no, "label must be a non-negative integer"))?;
            let split = match fields[2] {
                "train" => Split::Train,
                "test" => Split::Test,
                _ => return Err(manifest_err(line_no, "split must be `train` or `test`")),
            };
            entries.push(ManifestEntry {
                path: base_dir.join(fields[0]),
                label,
                split,
            });
        }
        let train_labels: BTreeSet<usize> = entries
            .iter()
            .filter(|e| e.split == Split::Train)
            .map(|e| e.label)
            .collect();
        if train_labels.is_empty() {
            return Err(DataError::EmptyTrain);
        }
        for entry in &entries {
            if !train_labels.contains(&entry.label) {
                return Err(DataError::LabelMissingFromTrain { label: entry.label });
            }
        }
        Ok(Self {
            entries,
            image_geometry,
            allow_resize,
        })
    }
}

/// Decode one image file to the manifest geometry and vectorize it
/// column-major.
fn load_column(
    path: &Path,
    geometry: (usize, usize),
    allow_resize: bool,
) -> Result<Vec<f64>, DataError> {
    let image = read_pgm(path)?;
    let (height, width) = geometry;
    let image = if (image.height, image.width) != geometry {
        if !allow_resize {
            return Err(DataError::Geometry {
                path: path.to_path_buf(),
                expected: geometry,
                found: (image.height, image.width),
            });
        }
        image.resize(height, width)
    } else {
        image
    };
    let mut column = Vec::with_capacity(height * width);
    for c in 0..width {
        for r in 0..height {
            column.push(image.get(r, c));
        }
    }
    Ok(column)
}

/// Load a manifest into train and test sample matrices.
///
/// The test matrix is `None` when the manifest has no test entries.
pub fn load_dataset(
    manifest: &DatasetManifest,
) -> Result<(SampleMatrix, Option<SampleMatrix>), DataError> {
    let columns = load_all_columns(manifest)?;
    let rows = manifest.image_geometry.0 * manifest.image_geometry.1;
    let build = |split: Split| -> Result<Option<SampleMatrix>, DataError> {
        let selected: Vec<(&Vec<f64>, usize)> = manifest
            .entries
            .iter()
            .zip(&columns)
            .filter(|(e, _)| e.split == split)
            .map(|(e, col)| (col, e.label))
            .collect();
        if selected.is_empty() {
            return Ok(None);
        }
        let mut data = DMatrix::zeros(rows, selected.len());
        let mut labels = Vec::with_capacity(selected.len());
        for (j, (col, label)) in selected.iter().enumerate() {
            data.column_mut(j).copy_from_slice(col);
            labels.push(*label);
        }
        Ok(Some(SampleMatrix::new(data, labels)?))
    };
    let train = build(Split::Train)?.ok_or(DataError::EmptyTrain)?;
    let test = build(Split::Test)?;
    Ok((train, test))
}

#[cfg(feature = "parallel")]
fn load_all_columns(manifest: &DatasetManifest) -> Result<Vec<Vec<f64>>, DataError> {
    use rayon::prelude::*;
    manifest
        .entries
        .par_iter()
        .map(|e| load_column(&e.path, manifest.image_geometry, manifest.allow_resize))
        .collect()
}

#[cfg(not(feature = "parallel"))]
fn load_all_columns(manifest: &DatasetManifest) -> Result<Vec<Vec<f64>>, DataError> {
    manifest
        .entries
        .iter()
        .map(|e| load_column(&e.path, manifest.image_geometry, manifest.allow_resize))
        .collect()
}

/// Write a dataset directory: `samples.mat` plus `labels.csv` (one label per
/// line, column order).
pub fn save_dataset_dir(dir: &Path, samples: &SampleMatrix) -> Result<(), DataError> {
    fs::create_dir_all(dir).map_err(|e| DataError::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    save_matrix(&dir.join("samples.mat"), samples.data())?;
    let text: String = samples.labels().iter().map(|l| format!("{l}\n")).collect();
    let labels_path = dir.join("labels.csv");
    fs::write(&labels_path, text).map_err(|e| DataError::Io {
        path: labels_path,
        source: e,
    })
}

/// Load a dataset directory written by [`save_dataset_dir`].
pub fn load_dataset_dir(dir: &Path) -> Result<SampleMatrix, DataError> {
    let matrix = load_matrix(&dir.join("samples.mat"))?;
    let labels_path = dir.join("labels.csv");
    let text = fs::read_to_string(&labels_path).map_err(|e| DataError::Io {
        path: labels_path.clone(),
        source: e,
    })?;
    let labels: Vec<usize> = text
        .lines()
        .map(|l| {
            l.trim().parse().map_err(|_| DataError::InvalidParam {
                message: format!("bad label line `{l}` in {}", labels_path.display()),
            })
        })
        .collect::<Result<_, _>>()?;
    Ok(SampleMatrix::new(matrix, labels)?)
}

/// Corruption flavor: scattered pixel replacement or a contiguous square
/// block pasted from an occluder image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorruptionKind {
    Pixel,
    Block,
}

/// Deterministic artificial-corruption settings.
#[derive(Debug, Clone)]
pub struct CorruptionSpec {
    pub kind: CorruptionKind,
    /// Fraction of samples (columns) to corrupt, in `[0, 1]`.
    pub sample_fraction: f64,
    /// Pixel kind: fraction of entries replaced per selected sample.
    /// Block kind: block side as a fraction of the shorter image side.
    /// In `(0, 1]` either way.
    pub per_image_extent: f64,
    pub rng_seed: u64,
}

impl CorruptionSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        if !(0.0..=1.0).contains(&self.sample_fraction) || !self.sample_fraction.is_finite() {
            return Err(invalid("sample_fraction must be in [0, 1]"));
        }
        if !(self.per_image_extent > 0.0 && self.per_image_extent <= 1.0) {
            return Err(invalid("per_image_extent must be in (0, 1]"));
        }
        Ok(())
    }
}

/// Apply artificial corruption to `ceil(sample_fraction * n)` columns.
///
/// Unselected columns are bit-identical to the input, and the output is a
/// pure function of `(x, spec, geometry, occluder)`. Block corruption needs
/// the image geometry `(height, width)`; the occluder defaults to a
/// checkerboard pattern and is tiled over the block when smaller.
pub fn corrupt(
    x: &SampleMatrix,
    spec: &CorruptionSpec,
    geometry: Option<(usize, usize)>,
    occluder: Option<&DMatrix<f64>>,
) -> Result<SampleMatrix, DataError> {
    spec.validate()?;
    let n = x.n_samples();
    let m = x.dim();
    let count = (spec.sample_fraction * n as f64).ceil() as usize;
    let mut data = x.data().clone();
    if count == 0 {
        return Ok(SampleMatrix::new(data, x.labels().to_vec())?);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let mut selected = sample_without_replacement(&mut rng, n, count);
    selected.sort_unstable();

    match spec.kind {
        CorruptionKind::Pixel => {
            let pixels = ((spec.per_image_extent * m as f64).ceil() as usize).min(m);
            for &col in &selected {
                let chosen = sample_without_replacement(&mut rng, m, pixels);
                for idx in chosen {
                    data[(idx, col)] = rng.random::<f64>();
                }
            }
        }
        CorruptionKind::Block => {
            let (height, width) =
                geometry.ok_or_else(|| invalid("block corruption requires image geometry"))?;
            if height * width != m {
                return Err(invalid(format!(
                    "geometry {height}x{width} does not match sample dimension {m}"
                )));
            }
            let short = height.min(width);
            let side = (((spec.per_image_extent * short as f64).round() as usize).max(1)).min(short);
            for &col in &selected {
                let top = rng.random_range(0..=height - side);
                let left = rng.random_range(0..=width - side);
                for dc in 0..side {
                    for dr in 0..side {
                        let value = match occluder {
                            Some(occ) => occ[(dr % occ.nrows(), dc % occ.ncols())],
                            None => ((dr + dc) % 2) as f64,
                        };
                        // column-major image layout: entry (r, c) lives at c*height + r
                        data[((left + dc) * height + (top + dr), col)] = value;
                    }
                }
            }
        }
    }
    Ok(SampleMatrix::new(data, x.labels().to_vec())?)
}

/// First `count` entries of a partial Fisher-Yates shuffle of `0..n`.
fn sample_without_replacement(rng: &mut ChaCha8Rng, n: usize, count: usize) -> Vec<usize> {
    debug_assert!(count <= n);
    let mut indices: Vec<usize> = (0..n).collect();
    for i in 0..count {
        let j = rng.random_range(i..n);
        indices.swap(i, j);
    }
    indices.truncate(count);
    indices
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    loop {
        let u1: f64 = rng.random();
        if u1 > f64::MIN_POSITIVE {
            let u2: f64 = rng.random();
            return (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
        }
    }
}

fn gauss_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    // fill column by column so consumption order matches the storage order
    let mut m = DMatrix::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            m[(i, j)] = gauss(rng);
        }
    }
    m
}

/// Generate labeled samples drawn from per-class random low-rank subspaces,
/// together with the noiseless ground truth.
///
/// Class subspaces are carved out of a single orthonormal frame whenever
/// `classes * rank <= ambient_dim`, making them mutually orthogonal by
/// construction; otherwise each class draws an independent random subspace.
/// Clean columns have unit norm; `noise` sets the expected per-column norm of
/// the added Gaussian perturbation. Deterministic per seed.
pub fn synth_multisubspace(
    classes: usize,
    ambient_dim: usize,
    rank: usize,
    per_class: usize,
    noise: f64,
    rng_seed: u64,
) -> Result<(SampleMatrix, DMatrix<f64>), DataError> {
    if classes == 0 {
        return Err(invalid("classes must be positive"));
    }
    if rank == 0 || rank >= ambient_dim {
        return Err(invalid("rank must satisfy 0 < rank < ambient_dim"));
    }
    if per_class <= rank {
        return Err(invalid("per_class must exceed rank"));
    }
    if !(noise >= 0.0) || !noise.is_finite() {
        return Err(invalid("noise must be non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);

    let bases: Vec<DMatrix<f64>> = if classes * rank <= ambient_dim {
        let frame = gauss_matrix(&mut rng, ambient_dim, classes * rank);
        let q = frame.qr().q();
        (0..classes)
            .map(|c| q.columns(c * rank, rank).into_owned())
            .collect()
    } else {
        (0..classes)
            .map(|_| gauss_matrix(&mut rng, ambient_dim, rank).qr().q())
            .collect()
    };

    let n = classes * per_class;
    let mut clean = DMatrix::zeros(ambient_dim, n);
    let mut labels = Vec::with_capacity(n);
    for (c, basis) in bases.iter().enumerate() {
        for k in 0..per_class {
            let col = c * per_class + k;
            loop {
                let coeffs = DMatrix::from_fn(rank, 1, |_, _| gauss(&mut rng));
                let sample = basis * coeffs;
                let norm = sample.norm();
                if norm > 1e-12 {
                    clean.column_mut(col).copy_from(&(sample / norm));
                    break;
                }
            }
            labels.push(c);
        }
    }

    let observed = if noise > 0.0 {
        let scale = noise / (ambient_dim as f64).sqrt();
        &clean + gauss_matrix(&mut rng, ambient_dim, n) * scale
    } else {
        clean.clone()
    };
    let samples = SampleMatrix::new(observed, labels)?;
    Ok((samples, clean))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn scratch_dir(tag: &str) -> PathBuf {
        static COUNTER: AtomicUsize = AtomicUsize::new(0);
        let id = COUNTER.fetch_add(1, Ordering::SeqCst);
        let dir = std::env::temp_dir().join(format!(
            "dlrr-data-test-{}-{}-{}",
            std::process::id(),
            tag,
            id
        ));
        fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn parses_manifest_and_checks_train_coverage() {
        let text = "path,label,split\na.pgm,0,train\nb.pgm,1,train\nc.pgm,0,test\n";
        let m = DatasetManifest::parse(text, Path::new("/d"), (4, 4), false).unwrap();
        assert_eq!(m.entries.len(), 3);
        assert_eq!(m.entries[2].path, Path::new("/d/c.pgm"));

        let orphan = "path,label,split\na.pgm,0,train\nc.pgm,7,test\n";
        assert!(matches!(
            DatasetManifest::parse(orphan, Path::new(""), (4, 4), false),
            Err(DataError::LabelMissingFromTrain { label: 7 })
        ));
    }

    #[test]
    fn rejects_malformed_manifests() {
        let bad_header = "file,label,split\na.pgm,0,train\n";
        assert!(DatasetManifest::parse(bad_header, Path::new(""), (4, 4), false).is_err());
        let bad_split = "path,label,split\na.pgm,0,validation\n";
        assert!(DatasetManifest::parse(bad_split, Path::new(""), (4, 4), false).is_err());
        let bad_label = "path,label,split\na.pgm,-1,train\n";
        assert!(DatasetManifest::parse(bad_label, Path::new(""), (4, 4), false).is_err());
        let no_train = "path,label,split\na.pgm,0,test\n";
        assert!(matches!(
            DatasetManifest::parse(no_train, Path::new(""), (4, 4), false),
            Err(DataError::EmptyTrain)
        ));
    }

    #[test]
    fn loads_tiny_pgm_fixtures() {
        let dir = scratch_dir("load");
        // 2x2 ASCII images with known pixel values
        fs::write(dir.join("a.pgm"), "P2\n2 2\n255\n255 0\n0 255\n").unwrap();
        fs::write(dir.join("b.pgm"), "P2\n2 2\n255\n255 255\n255 255\n").unwrap();
        fs::write(
            dir.join("m.csv"),
            "path,label,split\na.pgm,0,train\nb.pgm,0,train\n",
        )
        .unwrap();
        let manifest = DatasetManifest::from_csv(&dir.join("m.csv"), (2, 2), false).unwrap();
        let (train, test) = load_dataset(&manifest).unwrap();
        assert!(test.is_none());
        assert_eq!(train.dim(), 4);
        assert_eq!(train.n_samples(), 2);
        // column-major vectorization of a: rows of image are (255 0 / 0 255)
        let a = train.data().column(0);
        assert_eq!(a[0], 1.0); // (0,0)
        assert_eq!(a[1], 0.0); // (1,0)
        assert_eq!(a[2], 0.0); // (0,1)
        assert_eq!(a[3], 1.0); // (1,1)
        // constant white image loads as all ones
        assert!(train.data().column(1).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn geometry_mismatch_errors_without_resize() {
        let dir = scratch_dir("geom");
        fs::write(dir.join("a.pgm"), "P2\n2 2\n255\n1 2\n3 4\n").unwrap();
        fs::write(dir.join("m.csv"), "path,label,split\na.pgm,0,train\n").unwrap();
        let strict = DatasetManifest::from_csv(&dir.join("m.csv"), (4, 4), false).unwrap();
        assert!(matches!(
            load_dataset(&strict),
            Err(DataError::Geometry { .. })
        ));
        let lenient = DatasetManifest::from_csv(&dir.join("m.csv"), (4, 4), true).unwrap();
        let (train, _) = load_dataset(&lenient).unwrap();
        assert_eq!(train.dim(), 16);
    }

    #[test]
    fn load_is_deterministic() {
        let dir = scratch_dir("det");
        fs::write(dir.join("a.pgm"), "P2\n2 2\n255\n9 8\n7 6\n").unwrap();
        fs::write(
            dir.join("m.csv"),
            "path,label,split\na.pgm,0,train\na.pgm,0,test\n",
        )
        .unwrap();
        let manifest = DatasetManifest::from_csv(&dir.join("m.csv"), (2, 2), false).unwrap();
        let (t1, s1) = load_dataset(&manifest).unwrap();
        let (t2, s2) = load_dataset(&manifest).unwrap();
        assert_eq!(t1.data(), t2.data());
        assert_eq!(s1.unwrap().data(), s2.unwrap().data());
    }

    fn spec(kind: CorruptionKind, fraction: f64, extent: f64, seed: u64) -> CorruptionSpec {
        CorruptionSpec {
            kind,
            sample_fraction: fraction,
            per_image_extent: extent,
            rng_seed: seed,
        }
    }

    fn toy_samples(m: usize, n: usize) -> SampleMatrix {
        let data = DMatrix::from_fn(m, n, |i, j| ((i * n + j) % 7) as f64 / 10.0);
        SampleMatrix::new(data, vec![0; n]).unwrap()
    }

    #[test]
    fn corrupt_zero_fraction_is_identity() {
        let x = toy_samples(8, 5);
        let out = corrupt(&x, &spec(CorruptionKind::Pixel, 0.0, 0.5, 3), None, None).unwrap();
        assert_eq!(out.data(), x.data());
    }

    #[test]
    fn corrupt_is_deterministic_and_touches_exact_columns() {
        let x = toy_samples(16, 10);
        let s = spec(CorruptionKind::Pixel, 0.3, 0.5, 42);
        let a = corrupt(&x, &s, None, None).unwrap();
        let b = corrupt(&x, &s, None, None).unwrap();
        assert_eq!(a.data(), b.data());
        let changed: Vec<usize> = (0..10)
            .filter(|&j| a.data().column(j) != x.data().column(j))
            .collect();
        assert_eq!(changed.len(), 3); // ceil(0.3 * 10)
        for j in 0..10 {
            if !changed.contains(&j) {
                assert_eq!(a.data().column(j), x.data().column(j));
            }
        }
    }

    #[test]
    fn full_pixel_corruption_looks_uniform() {
        let x = toy_samples(100, 120);
        let s = spec(CorruptionKind::Pixel, 1.0, 1.0, 7);
        let out = corrupt(&x, &s, None, None).unwrap();
        let mean = out.data().iter().sum::<f64>() / (100.0 * 120.0);
        assert!(out.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!((mean - 0.5).abs() < 0.05, "mean {mean}");
    }

    #[test]
    fn block_corruption_alters_one_square_region() {
        let x = toy_samples(32 * 32, 6);
        let s = spec(CorruptionKind::Block, 0.5, 0.25, 11);
        let out = corrupt(&x, &s, Some((32, 32)), None).unwrap();
        let mut touched_cols = 0;
        for j in 0..6 {
            let diff: Vec<usize> = (0..32 * 32)
                .filter(|&i| out.data()[(i, j)] != x.data()[(i, j)])
                .collect();
            if diff.is_empty() {
                continue;
            }
            touched_cols += 1;
            // the diff mask must fit inside one 8x8 region
            let rows: Vec<usize> = diff.iter().map(|&i| i % 32).collect();
            let cols: Vec<usize> = diff.iter().map(|&i| i / 32).collect();
            let (rmin, rmax) = (
                *rows.iter().min().unwrap(),
                *rows.iter().max().unwrap(),
            );
            let (cmin, cmax) = (
                *cols.iter().min().unwrap(),
                *cols.iter().max().unwrap(),
            );
            assert!(rmax - rmin < 8, "rows span {rmin}..{rmax}");
            assert!(cmax - cmin < 8, "cols span {cmin}..{cmax}");
            // checkerboard occluder rewrites at least half the 8x8 block
            assert!(diff.len() >= 32, "only {} entries changed", diff.len());
        }
        assert_eq!(touched_cols, 3);
    }

    #[test]
    fn block_corruption_requires_geometry() {
        let x = toy_samples(16, 2);
        let s = spec(CorruptionKind::Block, 1.0, 0.5, 1);
        assert!(corrupt(&x, &s, None, None).is_err());
        assert!(corrupt(&x, &s, Some((3, 3)), None).is_err()); // 9 != 16
    }

    #[test]
    fn synth_rank_one_columns_are_parallel() {
        let (samples, _) = synth_multisubspace(2, 10, 1, 4, 0.0, 5).unwrap();
        let block = samples.class_columns(0).unwrap();
        let first = block.column(0).into_owned();
        for j in 1..block.ncols() {
            let cosine = first.dot(&block.column(j)).abs();
            assert!((cosine - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn synth_orthogonal_classes_have_orthogonal_columns() {
        let (samples, _) = synth_multisubspace(2, 12, 2, 5, 0.0, 6).unwrap();
        let a = samples.class_columns(0).unwrap();
        let b = samples.class_columns(1).unwrap();
        let cross = a.transpose() * b;
        assert!(linalg::inf_norm(&cross) <= 1e-8);
    }

    #[test]
    fn synth_clean_blocks_have_exact_rank() {
        let (samples, clean) = synth_multisubspace(3, 20, 2, 6, 0.05, 8).unwrap();
        for c in 0..3 {
            let range = samples.class_range(c).unwrap();
            let block = clean.columns(range.start, range.end - range.start).into_owned();
            let f = linalg::svd(&block).unwrap();
            assert!(f.singular_values[1] > 1e-6);
            assert!(f.singular_values[2] < 1e-10);
        }
    }

    #[test]
    fn synth_is_deterministic() {
        let (a, ca) = synth_multisubspace(2, 8, 2, 4, 0.1, 99).unwrap();
        let (b, cb) = synth_multisubspace(2, 8, 2, 4, 0.1, 99).unwrap();
        assert_eq!(a.data(), b.data());
        assert_eq!(ca, cb);
    }

    #[test]
    fn synth_validates_parameters() {
        assert!(synth_multisubspace(0, 10, 2, 4, 0.0, 1).is_err());
        assert!(synth_multisubspace(2, 10, 0, 4, 0.0, 1).is_err());
        assert!(synth_multisubspace(2, 10, 10, 12, 0.0, 1).is_err());
        assert!(synth_multisubspace(2, 10, 3, 3, 0.0, 1).is_err());
        assert!(synth_multisubspace(2, 10, 2, 4, -0.5, 1).is_err());
    }
}
