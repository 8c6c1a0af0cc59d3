//! Dataset ingestion and preprocessing.
//!
//! A domain is a CSV file, one sample per row: first column an integer class
//! label, remaining columns real-valued features. An optional header row is
//! detected by a non-numeric first cell and skipped. Labels are 0-based.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::{concatenate, Array1, Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, tags};

/// One domain: an N×D feature matrix with integer labels in `[0, num_classes)`.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub name: String,
}

impl Dataset {
    /// Builds a dataset, checking the structural invariants: matching row
    /// counts, labels in range, finite features, and at least one sample.
    pub fn new(
        features: Array2<f64>,
        labels: Vec<usize>,
        num_classes: usize,
        name: impl Into<String>,
    ) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::Data(format!(
                "feature rows ({}) and label count ({}) differ",
                features.nrows(),
                labels.len()
            )));
        }
        if features.nrows() == 0 {
            return Err(Error::Data("dataset is empty".into()));
        }
        if num_classes == 0 {
            return Err(Error::Data("num_classes must be at least 1".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Data(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        if !features.iter().all(|x| x.is_finite()) {
            return Err(Error::Data("non-finite feature value".into()));
        }
        Ok(Self {
            features,
            labels,
            num_classes,
            name: name.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Feature dimensionality D.
    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    /// Number of samples per class, indexed by class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Row subset in the given index order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::Data(format!(
                "row index {bad} out of range for {} samples",
                self.len()
            )));
        }
        Dataset::new(
            self.features.select(Axis(0), indices),
            indices.iter().map(|&i| self.labels[i]).collect(),
            self.num_classes,
            self.name.clone(),
        )
    }

    /// Writes `label,feature...` rows. Floats are printed with the shortest
    /// representation that parses back to the same value.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        for (row, &label) in self.features.rows().into_iter().zip(&self.labels) {
            write!(out, "{label}")?;
            for v in row {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn parse_cell(raw: &str, path: &str, line: u64, col: usize) -> Result<f64> {
    let value: f64 = raw.trim().parse().map_err(|_| Error::Format {
        path: path.into(),
        line,
        message: format!("column {}: cannot parse {raw:?} as a number", col + 1),
    })?;
    if !value.is_finite() {
        return Err(Error::Format {
            path: path.into(),
            line,
            message: format!("column {}: non-finite value {raw:?}", col + 1),
        });
    }
    Ok(value)
}

fn parse_label(raw: &str, path: &str, line: u64) -> Result<usize> {
    let value = parse_cell(raw, path, line, 0)?;
    if value < 0.0 || value.fract() != 0.0 {
        return Err(Error::Format {
            path: path.into(),
            line,
            message: format!("label {raw:?} is not a non-negative integer"),
        });
    }
    Ok(value as usize)
}

/// Loads one domain from CSV. The class count defaults to `max label + 1`
/// and can be overridden (e.g. when a domain happens to miss a class).
pub fn load_domain_csv(path: impl AsRef<Path>, name: &str) -> Result<Dataset> {
    load_domain_csv_with_classes(path, name, None)
}

pub fn load_domain_csv_with_classes(
    path: impl AsRef<Path>,
    name: &str,
    num_classes: Option<usize>,
) -> Result<Dataset> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)?;

    let mut labels = Vec::new();
    let mut values = Vec::new();
    let mut width: Option<usize> = None;
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Format {
            path: shown.clone(),
            line: e
                .position()
                .map(|p| p.line())
                .unwrap_or((idx + 1) as u64),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or((idx + 1) as u64);
        // Header row: first cell of the first record is non-numeric.
        if idx == 0 {
            let first = record.get(0).unwrap_or("");
            if first.trim().parse::<f64>().is_err() && !first.trim().is_empty() {
                continue;
            }
        }
        if record.len() < 2 {
            return Err(Error::Format {
                path: shown.clone(),
                line,
                message: format!("expected a label and at least one feature, got {} cells", record.len()),
            });
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(Error::Format {
                    path: shown.clone(),
                    line,
                    message: format!("row has {} cells, expected {w}", record.len()),
                });
            }
            _ => {}
        }
        labels.push(parse_label(record.get(0).unwrap(), &shown, line)?);
        for (col, cell) in record.iter().enumerate().skip(1) {
            values.push(parse_cell(cell, &shown, line, col)?);
        }
    }

    let width = width.ok_or_else(|| Error::Data(format!("{shown}: empty dataset")))?;
    let n = labels.len();
    let d = width - 1;
    let features = Array2::from_shape_vec((n, d), values)
        .map_err(|e| Error::Data(format!("{shown}: {e}")))?;
    let inferred = labels.iter().copied().max().unwrap_or(0) + 1;
    let c = match num_classes {
        Some(c) => c,
        None => inferred,
    };
    Dataset::new(features, labels, c, name)
}

/// Reads a feature matrix for prediction. Rows may carry a leading label
/// column (width `dim + 1`, label ignored) or be bare features (width `dim`).
/// An empty file yields a 0×dim matrix.
pub fn load_features_csv(path: impl AsRef<Path>, dim: usize) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)?;
    let mut values = Vec::new();
    let mut rows = 0usize;
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Format {
            path: shown.clone(),
            line: e.position().map(|p| p.line()).unwrap_or((idx + 1) as u64),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or((idx + 1) as u64);
        if idx == 0 {
            let first = record.get(0).unwrap_or("");
            if first.trim().parse::<f64>().is_err() && !first.trim().is_empty() {
                continue;
            }
        }
        let skip = if record.len() == dim + 1 {
            1
        } else if record.len() == dim {
            0
        } else {
            return Err(Error::Format {
                path: shown.clone(),
                line,
                message: format!(
                    "row has {} cells, expected {dim} features (or {} with a label column)",
                    record.len(),
                    dim + 1
                ),
            });
        };
        for (col, cell) in record.iter().enumerate().skip(skip) {
            values.push(parse_cell(cell, &shown, line, col)?);
        }
        rows += 1;
    }
    Array2::from_shape_vec((rows, dim), values).map_err(|e| Error::Data(format!("{shown}: {e}")))
}

/// One-hot label matrix: row i carries a single 1 at column `labels[i]`.
pub fn one_hot(labels: &[usize], num_classes: usize) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((labels.len(), num_classes));
    for (i, &l) in labels.iter().enumerate() {
        if l >= num_classes {
            return Err(Error::Data(format!(
                "label {l} out of range for {num_classes} classes"
            )));
        }
        out[(i, l)] = 1.0;
    }
    Ok(out)
}

/// Whether and how features are standardized before entering the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    None,
    #[default]
    Zscore,
}

impl std::fmt::Display for Normalization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Normalization::None => write!(f, "none"),
            Normalization::Zscore => write!(f, "zscore"),
        }
    }
}

impl std::str::FromStr for Normalization {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Normalization::None),
            "zscore" => Ok(Normalization::Zscore),
            other => Err(Error::Parameter(format!(
                "unknown normalization {other:?} (expected none|zscore)"
            ))),
        }
    }
}

/// Per-feature z-score statistics. The standard deviation is floored at
/// 1e-12 so constant columns map to zero rather than dividing by zero.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Array1<f64>,
    pub std: Array1<f64>,
}

const STD_FLOOR: f64 = 1e-12;

impl Normalizer {
    pub fn fit(features: &Array2<f64>) -> Result<Self> {
        let n = features.nrows();
        if n == 0 {
            return Err(Error::Parameter("cannot fit a normalizer on 0 rows".into()));
        }
        let mean = features.mean_axis(Axis(0)).expect("n >= 1");
        let mut var: Array1<f64> = Array1::zeros(features.ncols());
        for row in features.rows() {
            for (j, &v) in row.iter().enumerate() {
                let d = v - mean[j];
                var[j] += d * d;
            }
        }
        let std = var.mapv(|v| (v / n as f64).sqrt().max(STD_FLOOR));
        Ok(Self { mean, std })
    }

    pub fn apply(&self, features: &Array2<f64>) -> Result<Array2<f64>> {
        if features.ncols() != self.mean.len() {
            return Err(Error::Data(format!(
                "normalizer fitted on {} features, input has {}",
                self.mean.len(),
                features.ncols()
            )));
        }
        let mut out = features.to_owned();
        for mut row in out.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mean[j]) / self.std[j];
            }
        }
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// A semi-supervised source/target split: full labeled source, a small
/// labeled target slice, and the remaining unlabeled target rows (their
/// labels, when known, are kept aside for evaluation only).
#[derive(Debug, Clone)]
pub struct DomainSplit {
    pub source: Dataset,
    pub target_labeled: Dataset,
    pub target_unlabeled_features: Array2<f64>,
    pub target_unlabeled_truth: Option<Vec<usize>>,
    pub labeled_fraction: f64,
    pub seed: u64,
}

/// Seeded stratified index split. Per class with n samples,
/// `max(1, round(fraction·n))` go to the labeled side.
pub fn stratified_split_indices(
    labels: &[usize],
    num_classes: usize,
    fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Parameter(format!(
            "labeled fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let mut rng = stream_rng(seed, tags::SPLIT);
    let mut labeled = Vec::new();
    let mut unlabeled = Vec::new();
    for class in 0..num_classes {
        let mut members: Vec<usize> = labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == class)
            .map(|(i, _)| i)
            .collect();
        if members.is_empty() {
            continue;
        }
        members.shuffle(&mut rng);
        let take = ((fraction * members.len() as f64).round() as usize)
            .max(1)
            .min(members.len());
        labeled.extend_from_slice(&members[..take]);
        unlabeled.extend_from_slice(&members[take..]);
    }
    labeled.sort_unstable();
    unlabeled.sort_unstable();
    Ok((labeled, unlabeled))
}

/// Splits a target domain and pairs it with its source into a [`DomainSplit`].
pub fn split_domain(
    source: &Dataset,
    target: &Dataset,
    fraction: f64,
    seed: u64,
) -> Result<DomainSplit> {
    if source.dim() != target.dim() {
        return Err(Error::Data(format!(
            "source has {} features, target has {}",
            source.dim(),
            target.dim()
        )));
    }
    if source.num_classes != target.num_classes {
        return Err(Error::Data(format!(
            "source has {} classes, target has {}",
            source.num_classes, target.num_classes
        )));
    }
    let (labeled_idx, unlabeled_idx) =
        stratified_split_indices(&target.labels, target.num_classes, fraction, seed)?;
    let target_labeled = target.select(&labeled_idx)?;
    let target_unlabeled_features = target.features.select(Axis(0), &unlabeled_idx);
    let truth: Vec<usize> = unlabeled_idx.iter().map(|&i| target.labels[i]).collect();
    Ok(DomainSplit {
        source: source.clone(),
        target_labeled,
        target_unlabeled_features,
        target_unlabeled_truth: Some(truth),
        labeled_fraction: fraction,
        seed,
    })
}

/// Vertically stacks two feature matrices.
pub fn vstack(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    concatenate(Axis(0), &[a.view(), b.view()]).expect("column counts match")
}

/// One entry of a dataset manifest: `{"name", "path", "num_classes"}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DomainManifestEntry {
    pub name: String,
    pub path: String,
    pub num_classes: usize,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ManifestFile {
    List(Vec<DomainManifestEntry>),
    Wrapped { domains: Vec<DomainManifestEntry> },
}

/// Reads a JSON manifest (an array of entries, or `{"domains": [...]}`).
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<DomainManifestEntry>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let parsed: ManifestFile = serde_json::from_str(&text)?;
    Ok(match parsed {
        ManifestFile::List(v) => v,
        ManifestFile::Wrapped { domains } => domains,
    })
}

/// Loads every domain named by a manifest. Relative paths resolve against
/// the manifest's directory. Fails before returning any dataset if a file
/// is missing.
pub fn load_manifest_domains(path: impl AsRef<Path>) -> Result<Vec<Dataset>> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let entries = load_manifest(path)?;
    for entry in &entries {
        let file = resolve(base, &entry.path);
        if !file.exists() {
            return Err(Error::Data(format!(
                "domain {:?}: file {} does not exist",
                entry.name,
                file.display()
            )));
        }
    }
    entries
        .iter()
        .map(|entry| {
            load_domain_csv_with_classes(
                resolve(base, &entry.path),
                &entry.name,
                Some(entry.num_classes),
            )
        })
        .collect()
}

fn resolve(base: &Path, raw: &str) -> PathBuf {
    let p = Path::new(raw);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}
