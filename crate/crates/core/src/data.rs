//! Labeled datasets: CSV ingestion, min-max scaling and builtin generators.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::DataMatrix;

/// Per-feature min-max record; scaled = (raw - min) / (max - min).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaling {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl FeatureScaling {
    pub fn fit(raw: ArrayView2<f64>) -> Self {
        let min = raw
            .fold_axis(Axis(0), f64::INFINITY, |a, &b| a.min(b))
            .to_vec();
        let max = raw
            .fold_axis(Axis(0), f64::NEG_INFINITY, |a, &b| a.max(b))
            .to_vec();
        Self { min, max }
    }

    fn span(&self, j: usize) -> f64 {
        let s = self.max[j] - self.min[j];
        if s > 0.0 {
            s
        } else {
            1.0
        }
    }

    /// Maps raw features into [0, 1]; constant columns map to 0.
    pub fn apply(&self, raw: ArrayView2<f64>) -> DataMatrix {
        Array2::from_shape_fn(raw.dim(), |(i, j)| {
            (raw[[i, j]] - self.min[j]) / self.span(j)
        })
    }

    /// Back to raw units, e.g. for exporting synthetic samples.
    pub fn invert(&self, scaled: ArrayView2<f64>) -> DataMatrix {
        Array2::from_shape_fn(scaled.dim(), |(i, j)| {
            scaled[[i, j]] * self.span(j) + self.min[j]
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    pub name: String,
    /// Min-max scaled to [0, 1].
    pub features: DataMatrix,
    /// Values in `0..k`.
    pub labels: Vec<usize>,
    pub k: usize,
    pub scaling: FeatureScaling,
    /// Original label value for each remapped class.
    pub class_names: Vec<i64>,
}

impl LabeledDataset {
    /// Scales `raw` and remaps `raw_labels` (sorted order) onto `0..k`.
    pub fn from_raw(name: impl Into<String>, raw: DataMatrix, raw_labels: &[i64]) -> Result<Self> {
        if raw.nrows() != raw_labels.len() {
            return Err(Error::Dimension(format!(
                "{} rows but {} labels",
                raw.nrows(),
                raw_labels.len()
            )));
        }
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(
                "features contain non-finite values".into(),
            ));
        }
        let classes: BTreeMap<i64, usize> = raw_labels
            .iter()
            .copied()
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .enumerate()
            .map(|(i, c)| (c, i))
            .collect();
        if classes.len() < 2 {
            return Err(Error::Config("dataset needs at least two classes".into()));
        }
        let labels = raw_labels.iter().map(|l| classes[l]).collect();
        let scaling = FeatureScaling::fit(raw.view());
        let features = scaling.apply(raw.view());
        Ok(Self {
            name: name.into(),
            features,
            labels,
            k: classes.len(),
            scaling,
            class_names: classes.into_keys().collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn rows(&self, indices: &[usize]) -> DataMatrix {
        self.features.select(Axis(0), indices)
    }

    pub fn labels_of(&self, indices: &[usize]) -> Vec<usize> {
        indices.iter().map(|&i| self.labels[i]).collect()
    }

    /// Sample indices of every class.
    pub fn class_members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.k];
        for (i, &l) in self.labels.iter().enumerate() {
            members[l].push(i);
        }
        members
    }
}

/// Reads a headerless comma-separated file: `d` numeric feature columns
/// followed by one integer label column.
pub fn load_csv(path: &Path) -> Result<LabeledDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::Ingestion {
            line: 0,
            message: format!("{}: {e}", path.display()),
        })?;
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for record in reader.records() {
        let record = record.map_err(|e| Error::Ingestion {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.iter().all(str::is_empty) {
            continue;
        }
        if record.len() < 2 {
            return Err(Error::Ingestion {
                line,
                message: "need at least one feature and a label".into(),
            });
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(Error::Ingestion {
                    line,
                    message: format!("expected {w} columns, found {}", record.len()),
                })
            }
            _ => {}
        }
        let last = record.len() - 1;
        for (j, cell) in record.iter().enumerate() {
            if j == last {
                let label = cell
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.fract() == 0.0 && v.is_finite());
                match label {
                    Some(v) => labels.push(v as i64),
                    None => {
                        return Err(Error::Ingestion {
                            line,
                            message: format!("label {cell:?} is not an integer"),
                        })
                    }
                }
            } else {
                match cell.parse::<f64>() {
                    Ok(v) if v.is_finite() => values.push(v),
                    _ => {
                        return Err(Error::Ingestion {
                            line,
                            message: format!("column {} value {cell:?} is not numeric", j + 1),
                        })
                    }
                }
            }
        }
    }
    let Some(width) = width else {
        return Err(Error::Ingestion {
            line: 0,
            message: "file contains no rows".into(),
        });
    };
    let raw = Array2::from_shape_vec((labels.len(), width - 1), values)
        .map_err(|e| Error::Internal(e.to_string()))?;
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("csv")
        .to_string();
    LabeledDataset::from_raw(name, raw, &labels).map_err(|e| match e {
        Error::Config(message) => Error::Ingestion { line: 0, message },
        other => other,
    })
}

pub const BLOBS2_SEED: u64 = 20_230_501;
pub const BLOBS2_PER_CLUSTER: usize = 200;
/// Half-width of the uniform spread along the long axis.
pub const BLOBS2_HALF_WIDTH: f64 = 4.0;
/// Standard deviation across the long axis.
pub const BLOBS2_THICKNESS: f64 = 0.4;
/// Vertical distance between the two cluster means.
pub const BLOBS2_GAP: f64 = 5.0;

/// Two elongated clusters stacked vertically: cluster A centred at (0, 0),
/// cluster B at (0, 5). The first feature is uniform on [-4, 4]; the second
/// has Gaussian noise with standard deviation 0.4. Rows `0..200` are A and
/// `200..400` are B.
///
/// The global 2-means optimum separates A from B, but a client holding only
/// the tails of both clusters (see [`crate::federation::toy_partition`])
/// prefers a left/right cut.
pub fn blobs2() -> LabeledDataset {
    let mut rng = rng_from_seed(BLOBS2_SEED);
    let n = 2 * BLOBS2_PER_CLUSTER;
    let mut raw = Array2::zeros((n, 2));
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let cluster = i / BLOBS2_PER_CLUSTER;
        raw[[i, 0]] = rng.random_range(-BLOBS2_HALF_WIDTH..BLOBS2_HALF_WIDTH);
        raw[[i, 1]] =
            cluster as f64 * BLOBS2_GAP + BLOBS2_THICKNESS * rng.sample::<f64, _>(StandardNormal);
        labels.push(cluster as i64);
    }
    LabeledDataset::from_raw("blobs2", raw, &labels).expect("two classes")
}

/// Two concentric noisy rings (radii 1 and 3), 200 points each.
pub fn rings() -> LabeledDataset {
    let mut rng = rng_from_seed(BLOBS2_SEED + 1);
    let n = 400;
    let mut raw = Array2::zeros((n, 2));
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let cluster = i / 200;
        let radius = if cluster == 0 { 1.0 } else { 3.0 };
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let r = radius + 0.1 * rng.sample::<f64, _>(StandardNormal);
        raw[[i, 0]] = r * angle.cos();
        raw[[i, 1]] = r * angle.sin();
        labels.push(cluster as i64);
    }
    LabeledDataset::from_raw("rings", raw, &labels).expect("two classes")
}

pub const BUILTIN_DATASETS: &[&str] = &["blobs2", "rings"];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    Csv(PathBuf),
    Builtin(String),
}

impl fmt::Display for DatasetSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetSource::Csv(p) => write!(f, "csv:{}", p.display()),
            DatasetSource::Builtin(name) => write!(f, "builtin:{name}"),
        }
    }
}

impl DatasetSource {
    /// `builtin:<id>` or a file path.
    pub fn parse(spec: &str) -> Self {
        match spec.strip_prefix("builtin:") {
            Some(name) => DatasetSource::Builtin(name.to_string()),
            None => DatasetSource::Csv(PathBuf::from(spec.strip_prefix("csv:").unwrap_or(spec))),
        }
    }
}

pub fn load_dataset(source: &DatasetSource) -> Result<LabeledDataset> {
    match source {
        DatasetSource::Csv(path) => load_csv(path),
        DatasetSource::Builtin(name) => match name.as_str() {
            "blobs2" => Ok(blobs2()),
            "rings" => Ok(rings()),
            other => Err(Error::Config(format!(
                "unknown builtin dataset {other:?}; expected one of {BUILTIN_DATASETS:?}"
            ))),
        },
    }
}
