//! Labelled datasets: seeded synthetic generators, CSV I/O and splitting.

use std::path::Path;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::LabelVector;
use crate::rng::{derive_seed, rng_from_seed, stream};
use crate::tensor::Tensor;

/// Per-column min-max parameters recorded when features were rescaled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Tensor,
    labels: Vec<usize>,
    classes: usize,
    /// Observed `(min, max)` of every feature column.
    feature_range: Vec<(f64, f64)>,
    scaling: Option<MinMax>,
}

impl Dataset {
    pub fn new(features: Tensor, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if features.shape().len() != 2 {
            return Err(Error::contract("features must be an [n, d] matrix"));
        }
        if features.rows() == 0 {
            return Err(Error::contract("a dataset needs at least one sample"));
        }
        if labels.len() != features.rows() {
            return Err(Error::shape("labels", features.rows(), labels.len()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::contract(format!("label {bad} out of range for {classes} classes")));
        }
        let feature_range = column_ranges(&features);
        Ok(Self {
            features,
            labels,
            classes,
            feature_range,
            scaling: None,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn feature_range(&self) -> &[(f64, f64)] {
        &self.feature_range
    }

    pub fn scaling(&self) -> Option<&MinMax> {
        self.scaling.as_ref()
    }

    pub fn sample(&self, i: usize) -> (&[f64], usize) {
        (self.features.row(i), self.labels[i])
    }

    pub fn label_vector(&self, i: usize) -> Result<LabelVector> {
        LabelVector::new(self.labels[i], self.classes)
    }

    /// New dataset made of the given rows, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let d = self.dim();
        let mut data = Vec::with_capacity(indices.len() * d);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(self.features.row(i));
            labels.push(self.labels[i]);
        }
        let mut out = Dataset::new(Tensor::new(vec![indices.len(), d], data)?, labels, self.classes)?;
        out.scaling = self.scaling.clone();
        Ok(out)
    }

    /// Writes `x0,..,x{d-1},label` with a header row; floats round-trip exactly.
    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::new();
        let header: Vec<String> = (0..self.dim()).map(|j| format!("x{j}")).collect();
        out.push_str(&header.join(","));
        out.push_str(",label\n");
        for (row, label) in self.features.row_iter().zip(&self.labels) {
            for v in row {
                out.push_str(&format!("{v:?},"));
            }
            out.push_str(&format!("{label}\n"));
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

fn column_ranges(features: &Tensor) -> Vec<(f64, f64)> {
    let mut ranges = vec![(f64::INFINITY, f64::NEG_INFINITY); features.cols()];
    for row in features.row_iter() {
        for (r, &v) in ranges.iter_mut().zip(row) {
            r.0 = r.0.min(v);
            r.1 = r.1.max(v);
        }
    }
    ranges
}

/// Isotropic Gaussian clouds, one per center, `n_per_class` points each.
pub fn gen_blobs(seed: u64, n_per_class: usize, centers: &[Vec<f64>], sigma: f64) -> Result<Dataset> {
    if centers.len() < 2 {
        return Err(Error::contract("blobs need at least two centers"));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::contract(format!("sigma must be > 0, got {sigma}")));
    }
    if n_per_class == 0 {
        return Err(Error::contract("n_per_class must be positive"));
    }
    let d = centers[0].len();
    if d == 0 || centers.iter().any(|c| c.len() != d) {
        return Err(Error::contract("centers must share one positive dimension"));
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::contract(e.to_string()))?;
    let mut rng = rng_from_seed(derive_seed(seed, &[stream::DATA, 0]));
    let mut data = Vec::with_capacity(centers.len() * n_per_class * d);
    let mut labels = Vec::with_capacity(centers.len() * n_per_class);
    for (class, c) in centers.iter().enumerate() {
        for _ in 0..n_per_class {
            data.extend(c.iter().map(|&m| m + normal.sample(&mut rng)));
            labels.push(class);
        }
    }
    Dataset::new(Tensor::new(vec![labels.len(), d], data)?, labels, centers.len())
}

/// Two interleaved half circles of radius 1; class 0 is the upper arc
/// centered at the origin, class 1 the lower arc centered at `(1, 0.5)`.
pub fn gen_moons(seed: u64, n_per_class: usize, noise: f64) -> Result<Dataset> {
    if n_per_class == 0 {
        return Err(Error::contract("n_per_class must be positive"));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::contract(format!("noise must be >= 0, got {noise}")));
    }
    let mut rng = rng_from_seed(derive_seed(seed, &[stream::DATA, 1]));
    let normal = (noise > 0.0)
        .then(|| Normal::new(0.0, noise).map_err(|e| Error::contract(e.to_string())))
        .transpose()?;
    let denom = (n_per_class.max(2) - 1) as f64;
    let mut data = Vec::with_capacity(4 * n_per_class);
    let mut labels = Vec::with_capacity(2 * n_per_class);
    for class in 0..2 {
        for i in 0..n_per_class {
            let t = std::f64::consts::PI * i as f64 / denom;
            let (mut x, mut y) = if class == 0 {
                (t.cos(), t.sin())
            } else {
                (1.0 - t.cos(), 0.5 - t.sin())
            };
            if let Some(n) = &normal {
                x += n.sample(&mut rng);
                y += n.sample(&mut rng);
            }
            data.extend([x, y]);
            labels.push(class);
        }
    }
    Dataset::new(Tensor::new(vec![labels.len(), 2], data)?, labels, 2)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelColumn {
    Index(usize),
    Name(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureScaling {
    #[default]
    None,
    MinmaxToUnit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub label_column: LabelColumn,
    #[serde(default = "default_true")]
    pub header: bool,
    #[serde(default)]
    pub feature_scaling: FeatureScaling,
    /// Number of classes; labels at or above it are rejected. Inferred as
    /// `max label + 1` when absent.
    #[serde(default)]
    pub classes: Option<usize>,
}

fn default_true() -> bool {
    true
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            label_column: LabelColumn::Name("label".into()),
            header: true,
            feature_scaling: FeatureScaling::None,
            classes: None,
        }
    }
}

/// Loads a comma-separated file of decimal features and an integer label column.
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset> {
    let path = path.as_ref();
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(schema.header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => parse_err(0, format!("{other:?}")),
        })?;
    let label_idx = match &schema.label_column {
        LabelColumn::Index(i) => *i,
        LabelColumn::Name(name) => {
            if !schema.header {
                return Err(parse_err(1, format!("label column `{name}` given by name but file has no header")));
            }
            let headers = reader.headers().map_err(|e| parse_err(1, e.to_string()))?;
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| parse_err(1, format!("no column named `{name}`")))?
        }
    };

    let mut width = None;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        match width {
            None => {
                if label_idx >= record.len() {
                    return Err(parse_err(line, format!("label column {label_idx} missing")));
                }
                width = Some(record.len());
            }
            Some(w) if w != record.len() => {
                return Err(parse_err(line, format!("expected {w} fields, found {}", record.len())));
            }
            _ => {}
        }
        for (j, cell) in record.iter().enumerate() {
            if j == label_idx {
                let label: usize = cell
                    .parse()
                    .map_err(|_| parse_err(line, format!("unknown label `{cell}`")))?;
                if schema.classes.is_some_and(|c| label >= c) {
                    return Err(parse_err(line, format!("unknown label `{cell}`")));
                }
                labels.push(label);
            } else {
                let v: f64 = cell
                    .parse()
                    .map_err(|_| parse_err(line, format!("non-numeric cell `{cell}` in column {j}")))?;
                if !v.is_finite() {
                    return Err(parse_err(line, format!("non-finite cell `{cell}` in column {j}")));
                }
                data.push(v);
            }
        }
    }
    let Some(width) = width else {
        return Err(parse_err(0, "no data rows".into()));
    };
    let d = width - 1;
    if d == 0 {
        return Err(parse_err(0, "no feature columns".into()));
    }
    let classes = schema
        .classes
        .unwrap_or_else(|| labels.iter().copied().max().unwrap_or(0) + 1);
    let mut features = Tensor::new(vec![labels.len(), d], data)?;
    let scaling = match schema.feature_scaling {
        FeatureScaling::None => None,
        FeatureScaling::MinmaxToUnit => Some(minmax_scale(&mut features)),
    };
    let mut ds = Dataset::new(features, labels, classes)?;
    ds.scaling = scaling;
    Ok(ds)
}

/// Rescales each column to `[0, 1]`; constant columns map to 0.
fn minmax_scale(features: &mut Tensor) -> MinMax {
    let ranges = column_ranges(features);
    let d = features.cols();
    for row in features.as_mut_slice().chunks_mut(d) {
        for (v, &(lo, hi)) in row.iter_mut().zip(&ranges) {
            *v = if hi > lo { ((*v - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.0 };
        }
    }
    MinMax {
        min: ranges.iter().map(|r| r.0).collect(),
        max: ranges.iter().map(|r| r.1).collect(),
    }
}

/// Seeded shuffle, then the first `round(fraction · n)` rows become the
/// training part. Both parts must be nonempty.
pub fn split(dataset: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let (train_idx, test_idx) = split_indices(dataset.len(), fraction, seed)?;
    Ok((dataset.subset(&train_idx)?, dataset.subset(&test_idx)?))
}

pub fn split_indices(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::contract(format!("split fraction must be in (0, 1), got {fraction}")));
    }
    let n_train = (fraction * n as f64).round() as usize;
    if n_train == 0 || n_train >= n {
        return Err(Error::contract(format!(
            "split of {n} rows at {fraction} leaves an empty part"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_from_seed(derive_seed(seed, &[stream::SPLIT])));
    let test = idx.split_off(n_train);
    Ok((idx, test))
}
