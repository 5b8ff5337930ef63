//! Dataset loading, encoding, splitting and increment partitioning.
//!
//! Tables are read from comma-separated files with a header row; `?` marks a
//! missing cell. A plain-text schema sidecar names each column's kind and the
//! raw label value that maps to class 1:
//!
//! ```text
//! age,numerical
//! chest_pain,categorical
//! class,label
//! positive_label=2
//! ```
//!
//! Encoding is fitted on training rows only: categorical columns become one
//! indicator per category (first-appearance order, unseen categories encode
//! as all zeros) and numerical columns are standardised with the population
//! mean and standard deviation.

use std::collections::HashMap;
use std::fmt;
use std::io::Read;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Cell marker for a missing value.
pub const MISSING: &str = "?";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numerical,
    Categorical,
    Label,
}

impl FromStr for ColumnKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "numerical" | "numeric" => Ok(ColumnKind::Numerical),
            "categorical" => Ok(ColumnKind::Categorical),
            "label" => Ok(ColumnKind::Label),
            other => Err(Error::Schema(format!("unknown column kind `{other}`"))),
        }
    }
}

impl fmt::Display for ColumnKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ColumnKind::Numerical => "numerical",
            ColumnKind::Categorical => "categorical",
            ColumnKind::Label => "label",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnSchema {
    columns: Vec<(String, ColumnKind)>,
    positive_label: String,
}

impl ColumnSchema {
    /// Exactly one column must be the label and at least one must be a feature.
    pub fn new(columns: Vec<(String, ColumnKind)>, positive_label: impl Into<String>) -> Result<Self> {
        let labels = columns.iter().filter(|(_, k)| *k == ColumnKind::Label).count();
        if labels != 1 {
            return Err(Error::Schema(format!(
                "expected exactly one label column, found {labels}"
            )));
        }
        if columns.len() < 2 {
            return Err(Error::Schema("schema has no feature columns".into()));
        }
        let positive_label = positive_label.into();
        if positive_label.is_empty() {
            return Err(Error::Schema("positive_label is empty".into()));
        }
        Ok(Self {
            columns,
            positive_label,
        })
    }

    /// Parses the sidecar format: `name,kind` lines plus `positive_label=<value>`.
    /// Blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut columns = Vec::new();
        let mut positive = None;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(value) = line.strip_prefix("positive_label=") {
                positive = Some(value.trim().to_string());
                continue;
            }
            let (name, kind) = line.rsplit_once(',').ok_or_else(|| {
                Error::Schema(format!("line {}: expected `name,kind`", lineno + 1))
            })?;
            columns.push((name.trim().to_string(), kind.parse()?));
        }
        let positive = positive.ok_or_else(|| Error::Schema("missing positive_label line".into()))?;
        Self::new(columns, positive)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn columns(&self) -> &[(String, ColumnKind)] {
        &self.columns
    }

    pub fn positive_label(&self) -> &str {
        &self.positive_label
    }

    pub fn label_index(&self) -> usize {
        self.columns
            .iter()
            .position(|(_, k)| *k == ColumnKind::Label)
            .expect("validated in constructor")
    }

    pub fn count(&self, kind: ColumnKind) -> usize {
        self.columns.iter().filter(|(_, k)| *k == kind).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Missing,
    Number(f64),
    Text(String),
}

impl Cell {
    pub fn is_missing(&self) -> bool {
        matches!(self, Cell::Missing)
    }
}

/// Typed rows as read from disk, before any row is dropped or encoded.
#[derive(Debug, Clone)]
pub struct RawTable {
    pub name: String,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl RawTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

pub fn load_csv(path: impl AsRef<Path>, schema: &ColumnSchema) -> Result<RawTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_csv(file, &name, schema)
}

pub fn read_csv<R: Read>(reader: R, name: &str, schema: &ColumnSchema) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if headers.len() != schema.columns.len() {
        return Err(Error::ColumnCount {
            row: 0,
            expected: schema.columns.len(),
            found: headers.len(),
        });
    }
    for (position, (found, (expected, _))) in headers.iter().zip(&schema.columns).enumerate() {
        if found != expected {
            return Err(Error::HeaderMismatch {
                position,
                expected: expected.clone(),
                found: found.clone(),
            });
        }
    }

    let positive = schema.positive_label();
    let mut negative: Option<String> = None;
    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let row = i + 1;
        if record.len() != schema.columns.len() {
            return Err(Error::ColumnCount {
                row,
                expected: schema.columns.len(),
                found: record.len(),
            });
        }
        let mut cells = Vec::with_capacity(record.len());
        for (value, (column, kind)) in record.iter().zip(&schema.columns) {
            if value == MISSING {
                cells.push(Cell::Missing);
                continue;
            }
            let cell = match kind {
                ColumnKind::Numerical => Cell::Number(value.parse().map_err(|_| Error::ParseNumber {
                    row,
                    column: column.clone(),
                    value: value.to_string(),
                })?),
                ColumnKind::Label => {
                    if value != positive {
                        match &negative {
                            None => negative = Some(value.to_string()),
                            Some(neg) if neg == value => {}
                            Some(neg) => {
                                return Err(Error::UnknownLabel {
                                    row,
                                    value: value.to_string(),
                                    positive: positive.to_string(),
                                    negative: neg.clone(),
                                })
                            }
                        }
                    }
                    Cell::Text(value.to_string())
                }
                ColumnKind::Categorical => Cell::Text(value.to_string()),
            };
            cells.push(cell);
        }
        rows.push(cells);
    }

    Ok(RawTable {
        name: name.to_string(),
        headers,
        rows,
    })
}

/// Unencoded feature columns shared between a dataset and its splits.
#[derive(Debug)]
enum SourceColumn {
    Numeric(Vec<f64>),
    Categorical(Vec<String>),
}

#[derive(Debug)]
struct Source {
    columns: Vec<SourceColumn>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FeatureEncoding {
    Standardized { mean: f64, std: f64 },
    OneHot { categories: Vec<String> },
}

impl FeatureEncoding {
    fn width(&self) -> usize {
        match self {
            FeatureEncoding::Standardized { .. } => 1,
            FeatureEncoding::OneHot { categories } => categories.len(),
        }
    }
}

/// Per-column encoding fitted on a set of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoding {
    pub features: Vec<FeatureEncoding>,
}

impl Encoding {
    fn fit(source: &Source, rows: &[usize]) -> Self {
        let features = source
            .columns
            .iter()
            .map(|col| match col {
                SourceColumn::Numeric(values) => {
                    let (mean, std) = population_stats(rows.iter().map(|&r| values[r]));
                    FeatureEncoding::Standardized { mean, std }
                }
                SourceColumn::Categorical(values) => {
                    let mut categories: Vec<String> = Vec::new();
                    for &r in rows {
                        if !categories.contains(&values[r]) {
                            categories.push(values[r].clone());
                        }
                    }
                    FeatureEncoding::OneHot { categories }
                }
            })
            .collect();
        Encoding { features }
    }

    fn identity(dim: usize) -> Self {
        Encoding {
            features: vec![FeatureEncoding::Standardized { mean: 0.0, std: 1.0 }; dim],
        }
    }

    pub fn width(&self) -> usize {
        self.features.iter().map(FeatureEncoding::width).sum()
    }

    /// `(mean, std)` for every numerical source column, in column order.
    pub fn standardization_stats(&self) -> Vec<(f64, f64)> {
        self.features
            .iter()
            .filter_map(|f| match f {
                FeatureEncoding::Standardized { mean, std } => Some((*mean, *std)),
                FeatureEncoding::OneHot { .. } => None,
            })
            .collect()
    }

    fn transform(&self, source: &Source, rows: &[usize]) -> Array2<f64> {
        let mut x = Array2::zeros((rows.len(), self.width()));
        let mut offset = 0;
        for (enc, col) in self.features.iter().zip(&source.columns) {
            match (enc, col) {
                (FeatureEncoding::Standardized { mean, std }, SourceColumn::Numeric(values)) => {
                    for (i, &r) in rows.iter().enumerate() {
                        x[[i, offset]] = (values[r] - mean) / std;
                    }
                }
                (FeatureEncoding::OneHot { categories }, SourceColumn::Categorical(values)) => {
                    let index: HashMap<&str, usize> = categories
                        .iter()
                        .enumerate()
                        .map(|(k, c)| (c.as_str(), k))
                        .collect();
                    for (i, &r) in rows.iter().enumerate() {
                        if let Some(&k) = index.get(values[r].as_str()) {
                            x[[i, offset + k]] = 1.0;
                        }
                    }
                }
                _ => unreachable!("encoding fitted on a different source"),
            }
            offset += enc.width();
        }
        x
    }
}

/// Population mean and standard deviation; a (near-)constant column gets a
/// standard deviation of 1 so it encodes as zeros after centring.
fn population_stats(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count();
    if n == 0 {
        return (0.0, 1.0);
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    let std = var.sqrt();
    if !std.is_finite() || std <= 1e-12 * mean.abs().max(1.0) {
        (mean, 1.0)
    } else {
        (mean, std)
    }
}

/// An encoded binary classification dataset.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    x: Array2<f64>,
    y: Vec<u8>,
    encoding: Encoding,
    dropped_rows: usize,
    source: Arc<Source>,
    rows: Vec<usize>,
}

impl Dataset {
    /// Wraps an already-numeric feature matrix; features pass through
    /// unchanged until the dataset is split.
    pub fn from_features(name: impl Into<String>, x: Array2<f64>, y: Vec<u8>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::invalid(format!(
                "{} feature rows but {} labels",
                x.nrows(),
                y.len()
            )));
        }
        if y.iter().any(|&c| c > 1) {
            return Err(Error::invalid("labels must be 0 or 1"));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("feature matrix contains non-finite values"));
        }
        let columns = x
            .columns()
            .into_iter()
            .map(|c| SourceColumn::Numeric(c.to_vec()))
            .collect();
        let rows = (0..x.nrows()).collect();
        Ok(Self {
            name: name.into(),
            encoding: Encoding::identity(x.ncols()),
            x,
            y,
            dropped_rows: 0,
            source: Arc::new(Source { columns }),
            rows,
        })
    }

    pub fn x(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    pub fn y(&self) -> &[u8] {
        &self.y
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.x.row(i)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }

    pub fn encoding(&self) -> &Encoding {
        &self.encoding
    }

    pub fn standardization_stats(&self) -> Vec<(f64, f64)> {
        self.encoding.standardization_stats()
    }

    /// Rows removed by [`preprocess`] because they held a missing cell.
    pub fn dropped_rows(&self) -> usize {
        self.dropped_rows
    }

    pub fn positives(&self) -> usize {
        self.y.iter().filter(|&&c| c == 1).count()
    }

    /// Views of rows `range`.
    pub fn slice(&self, range: Range<usize>) -> (ArrayView2<'_, f64>, &[u8]) {
        (
            self.x.slice(ndarray::s![range.clone(), ..]),
            &self.y[range],
        )
    }

    fn subset(&self, rows: Vec<usize>, labels: Vec<u8>, encoding: Encoding) -> Dataset {
        Dataset {
            name: self.name.clone(),
            x: encoding.transform(&self.source, &rows),
            y: labels,
            encoding,
            dropped_rows: self.dropped_rows,
            source: Arc::clone(&self.source),
            rows,
        }
    }
}

/// Drops incomplete rows, one-hot encodes categorical columns, standardises
/// numerical columns and maps labels to `{0, 1}`.
pub fn preprocess(raw: &RawTable, schema: &ColumnSchema) -> Result<Dataset> {
    let label_name = &schema.columns[schema.label_index()].0;
    let label_col = raw
        .headers
        .iter()
        .position(|h| h == label_name)
        .ok_or_else(|| Error::LabelColumnMissing(label_name.clone()))?;
    if raw.headers.len() != schema.columns.len() {
        return Err(Error::ColumnCount {
            row: 0,
            expected: schema.columns.len(),
            found: raw.headers.len(),
        });
    }

    let kept: Vec<&Vec<Cell>> = raw
        .rows
        .iter()
        .filter(|row| !row.iter().any(Cell::is_missing))
        .collect();
    if kept.is_empty() {
        return Err(Error::AllRowsDropped(raw.name.clone()));
    }

    let mut columns = Vec::new();
    for (c, (name, kind)) in schema.columns.iter().enumerate() {
        match kind {
            ColumnKind::Label => {}
            ColumnKind::Numerical => {
                let values = kept
                    .iter()
                    .map(|row| match &row[c] {
                        Cell::Number(v) => Ok(*v),
                        Cell::Text(t) => t.parse().map_err(|_| Error::ParseNumber {
                            row: 0,
                            column: name.clone(),
                            value: t.clone(),
                        }),
                        Cell::Missing => unreachable!("missing rows dropped"),
                    })
                    .collect::<Result<Vec<f64>>>()?;
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::invalid(format!("non-finite value in column `{name}`")));
                }
                columns.push(SourceColumn::Numeric(values));
            }
            ColumnKind::Categorical => {
                let values = kept
                    .iter()
                    .map(|row| match &row[c] {
                        Cell::Text(t) => t.clone(),
                        Cell::Number(v) => v.to_string(),
                        Cell::Missing => unreachable!("missing rows dropped"),
                    })
                    .collect();
                columns.push(SourceColumn::Categorical(values));
            }
        }
    }

    let y: Vec<u8> = kept
        .iter()
        .map(|row| match &row[label_col] {
            Cell::Text(t) if t == schema.positive_label() => 1,
            Cell::Number(v) if v.to_string() == schema.positive_label() => 1,
            _ => 0,
        })
        .collect();

    let source = Arc::new(Source { columns });
    let rows: Vec<usize> = (0..kept.len()).collect();
    let encoding = Encoding::fit(&source, &rows);
    Ok(Dataset {
        name: raw.name.clone(),
        x: encoding.transform(&source, &rows),
        y,
        encoding,
        dropped_rows: raw.rows.len() - kept.len(),
        source,
        rows,
    })
}

/// Sidecar schema path for a CSV file: `name.csv` → `name.schema`.
pub fn schema_path(csv: impl AsRef<Path>) -> PathBuf {
    csv.as_ref().with_extension("schema")
}

/// Loads `path` with its `.schema` sidecar and preprocesses it.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let schema = ColumnSchema::from_file(schema_path(path))?;
    let raw = load_csv(path, &schema)?;
    preprocess(&raw, &schema)
}

/// Shuffles with `seed`, holds out `round(len · test_fraction)` rows, and
/// refits the encoding on the training rows before applying it to both sides.
pub fn shuffle_split(dataset: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if dataset.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "test_fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let m = dataset.len();
    let n_test = (m as f64 * test_fraction).round() as usize;
    if n_test == 0 || n_test == m {
        return Err(Error::invalid(format!(
            "test_fraction {test_fraction} leaves an empty split of {m} rows"
        )));
    }

    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut seed::rng(seed));
    let (test_idx, train_idx) = order.split_at(n_test);

    let pick = |idx: &[usize]| -> (Vec<usize>, Vec<u8>) {
        (
            idx.iter().map(|&i| dataset.rows[i]).collect(),
            idx.iter().map(|&i| dataset.y[i]).collect(),
        )
    };
    let (train_rows, train_y) = pick(train_idx);
    let (test_rows, test_y) = pick(test_idx);

    let encoding = Encoding::fit(&dataset.source, &train_rows);
    let train = dataset.subset(train_rows, train_y, encoding.clone());
    let test = dataset.subset(test_rows, test_y, encoding);
    Ok((train, test))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IncrementPartition {
    pub increment_size: usize,
    pub slices: Vec<Range<usize>>,
}

impl IncrementPartition {
    /// `floor(m / u)` increments of `u` rows; leftover rows join the last one.
    pub fn new(m: usize, increment_size: usize) -> Result<Self> {
        if increment_size == 0 {
            return Err(Error::invalid("increment size must be at least 1"));
        }
        if increment_size > m {
            return Err(Error::invalid(format!(
                "increment size {increment_size} exceeds {m} training rows"
            )));
        }
        let count = m / increment_size;
        let slices = (0..count)
            .map(|t| {
                let start = t * increment_size;
                let end = if t + 1 == count { m } else { start + increment_size };
                start..end
            })
            .collect();
        Ok(Self {
            increment_size,
            slices,
        })
    }

    pub fn count(&self) -> usize {
        self.slices.len()
    }

    pub fn covered(&self) -> usize {
        self.slices.last().map_or(0, |s| s.end)
    }
}

pub fn partition_increments(train: &Dataset, increment_size: usize) -> Result<IncrementPartition> {
    IncrementPartition::new(train.len(), increment_size)
}

/// Two isotropic Gaussian blobs centred at `±separation/2` along every axis.
pub fn two_gaussians(m: usize, dim: usize, separation: f64, seed: u64) -> Dataset {
    let mut rng = seed::rng(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut x = Array2::zeros((m, dim));
    let mut y = Vec::with_capacity(m);
    for i in 0..m {
        let class = (i % 2) as u8;
        let centre = if class == 1 { separation / 2.0 } else { -separation / 2.0 };
        for j in 0..dim {
            x[[i, j]] = centre + normal.sample(&mut rng);
        }
        y.push(class);
    }
    Dataset::from_features("two-gaussians", x, y).expect("finite synthetic data")
}
