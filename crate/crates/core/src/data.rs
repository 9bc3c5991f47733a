//! Ordinal datasets: ingestion from delimited text, response dichotomization
//! and row-level splitting.
//!
//! Categories are encoded `1..=k` everywhere. Categorical features are
//! expanded to 0/1 indicator columns at load time (first level dropped as the
//! reference), so every downstream fitter only sees a dense real matrix.

use std::collections::HashMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("row {row}: missing value in column `{column}`")]
    MissingValue { row: usize, column: String },
    #[error("row {row}: non-numeric value `{value}` in numeric column `{column}`")]
    NonNumeric { row: usize, column: String, value: String },
    #[error("row {row}: unknown level `{value}` for categorical column `{column}`")]
    UnknownLevel { row: usize, column: String, value: String },
    #[error("row {row}: response level `{value}` is not declared in the schema")]
    UnknownResponse { row: usize, value: String },
    #[error("row {row}: expected {expected} fields, found {found}")]
    RaggedRow { row: usize, expected: usize, found: usize },
    #[error("column `{0}` named in the schema is absent from the header")]
    MissingColumn(String),
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error("split index {r} outside 2..={k}")]
    SplitOutOfRange { r: usize, k: usize },
    #[error("learning-set size {n_learn} must lie in 1..{n}")]
    LearnSizeOutOfRange { n_learn: usize, n: usize },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

/// Dense row-major real matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    n_rows: usize,
    n_cols: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(n_rows: usize, n_cols: usize, data: Vec<f64>) -> Result<Self, DataError> {
        if data.len() != n_rows * n_cols {
            return Err(DataError::Invalid(format!(
                "matrix data has {} entries, expected {}x{}",
                data.len(),
                n_rows,
                n_cols
            )));
        }
        Ok(Self { n_rows, n_cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, DataError> {
        let n_cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(DataError::Invalid("rows of unequal length".into()));
        }
        let data = rows.iter().flatten().copied().collect();
        Self::new(rows.len(), n_cols, data)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.n_cols + j] = value;
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.n_rows).map(move |i| self.row(i))
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_rows).map(move |i| self.get(i, j))
    }

    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        let mut data = Vec::with_capacity(rows.len() * self.n_cols);
        for &i in rows {
            data.extend_from_slice(self.row(i));
        }
        FeatureMatrix { n_rows: rows.len(), n_cols: self.n_cols, data }
    }
}

/// Feature matrix plus an ordered categorical response with `k` levels.
#[derive(Debug, Clone, PartialEq)]
pub struct OrdinalDataset {
    features: FeatureMatrix,
    feature_names: Vec<String>,
    response: Vec<usize>,
    response_name: String,
    level_labels: Vec<String>,
}

impl OrdinalDataset {
    pub fn new(
        features: FeatureMatrix,
        feature_names: Vec<String>,
        response: Vec<usize>,
        response_name: impl Into<String>,
        level_labels: Vec<String>,
    ) -> Result<Self, DataError> {
        let k = level_labels.len();
        if k < 2 {
            return Err(DataError::Invalid(format!("need at least 2 categories, got {k}")));
        }
        if response.is_empty() {
            return Err(DataError::Invalid("dataset has no rows".into()));
        }
        if features.n_rows() != response.len() {
            return Err(DataError::Invalid(format!(
                "{} feature rows but {} responses",
                features.n_rows(),
                response.len()
            )));
        }
        if feature_names.len() != features.n_cols() {
            return Err(DataError::Invalid(format!(
                "{} feature names for {} columns",
                feature_names.len(),
                features.n_cols()
            )));
        }
        if let Some((i, &y)) = response.iter().enumerate().find(|(_, &y)| y < 1 || y > k) {
            return Err(DataError::Invalid(format!("row {}: response {y} outside 1..={k}", i + 1)));
        }
        if let Some(i) = features.data.iter().position(|v| !v.is_finite()) {
            return Err(DataError::MissingValue {
                row: i / features.n_cols().max(1) + 1,
                column: feature_names[i % features.n_cols().max(1)].clone(),
            });
        }
        Ok(Self { features, feature_names, response, response_name: response_name.into(), level_labels })
    }

    /// Dataset with generic names `x1..xp` and labels `1..k`.
    pub fn from_parts(features: FeatureMatrix, response: Vec<usize>, k: usize) -> Result<Self, DataError> {
        let names = (1..=features.n_cols()).map(|j| format!("x{j}")).collect();
        let labels = (1..=k).map(|r| r.to_string()).collect();
        Self::new(features, names, response, "y", labels)
    }

    pub fn n(&self) -> usize {
        self.response.len()
    }

    pub fn p(&self) -> usize {
        self.features.n_cols()
    }

    pub fn k(&self) -> usize {
        self.level_labels.len()
    }

    pub fn features(&self) -> &FeatureMatrix {
        &self.features
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn response(&self) -> &[usize] {
        &self.response
    }

    pub fn response_name(&self) -> &str {
        &self.response_name
    }

    pub fn level_labels(&self) -> &[String] {
        &self.level_labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.features.row(i)
    }

    /// Number of observations in each category, indexed `0..k`.
    pub fn category_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.k()];
        for &y in &self.response {
            counts[y - 1] += 1;
        }
        counts
    }

    /// Rows `rows` (in the given order), keeping `k` and all labels.
    pub fn subset(&self, rows: &[usize]) -> OrdinalDataset {
        OrdinalDataset {
            features: self.features.select_rows(rows),
            feature_names: self.feature_names.clone(),
            response: rows.iter().map(|&i| self.response[i]).collect(),
            response_name: self.response_name.clone(),
            level_labels: self.level_labels.clone(),
        }
    }

    /// Serializes the dataset as a delimited table plus a schema under which
    /// [`load_dataset`] reproduces it exactly.
    pub fn to_table(&self) -> (String, DatasetSchema) {
        let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
        let mut header: Vec<&str> = self.feature_names.iter().map(String::as_str).collect();
        header.push(&self.response_name);
        w.write_record(&header).expect("in-memory write");
        for i in 0..self.n() {
            let mut rec: Vec<String> = self.row(i).iter().map(|v| format!("{v:?}")).collect();
            rec.push(self.level_labels[self.response[i] - 1].clone());
            w.write_record(&rec).expect("in-memory write");
        }
        let text = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8");
        let schema = DatasetSchema {
            delimiter: None,
            response: ResponseSpec {
                column: self.response_name.clone(),
                levels: Some(self.level_labels.clone()),
                cutoffs: None,
            },
            features: self.feature_names.iter().map(|name| FeatureSpec::Numeric { name: name.clone() }).collect(),
        };
        (text, schema)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureSpec {
    Numeric { name: String },
    Categorical { name: String, levels: Vec<String> },
}

impl FeatureSpec {
    pub fn name(&self) -> &str {
        match self {
            FeatureSpec::Numeric { name } | FeatureSpec::Categorical { name, .. } => name,
        }
    }
}

/// Response column description: either an ordered list of level labels or
/// a set of strictly increasing cutoffs for binning a numeric column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseSpec {
    pub column: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoffs: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSchema {
    /// Single-character field delimiter; comma when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delimiter: Option<char>,
    pub response: ResponseSpec,
    #[serde(default)]
    pub features: Vec<FeatureSpec>,
}

impl DatasetSchema {
    pub fn from_toml(text: &str) -> Result<Self, DataError> {
        let schema: DatasetSchema = toml::from_str(text)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, DataError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("schema is always representable as TOML")
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let schema_err = |m: String| Err(DataError::Schema(m));
        match (&self.response.levels, &self.response.cutoffs) {
            (Some(levels), None) => {
                if levels.len() < 2 {
                    return schema_err("response needs at least 2 levels".into());
                }
                check_unique(levels, &self.response.column)?;
            }
            (None, Some(cutoffs)) => {
                if cutoffs.is_empty() {
                    return schema_err("response cutoffs must be non-empty".into());
                }
                if cutoffs.iter().any(|c| !c.is_finite()) || cutoffs.windows(2).any(|w| w[0] >= w[1]) {
                    return schema_err("response cutoffs must be finite and strictly increasing".into());
                }
            }
            _ => return schema_err("response needs exactly one of `levels` or `cutoffs`".into()),
        }
        if let Some(d) = self.delimiter {
            if !d.is_ascii() {
                return schema_err(format!("delimiter `{d}` is not a single-byte character"));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for f in &self.features {
            if !seen.insert(f.name()) || f.name() == self.response.column {
                return schema_err(format!("column `{}` declared twice", f.name()));
            }
            if let FeatureSpec::Categorical { name, levels } = f {
                if levels.is_empty() {
                    return schema_err(format!("categorical column `{name}` has no levels"));
                }
                check_unique(levels, name)?;
            }
        }
        Ok(())
    }

    /// Number of response categories the schema produces.
    pub fn k(&self) -> usize {
        match (&self.response.levels, &self.response.cutoffs) {
            (Some(l), _) => l.len(),
            (_, Some(c)) => c.len() + 1,
            _ => 0,
        }
    }

    /// Display label of each category.
    pub fn level_labels(&self) -> Vec<String> {
        if let Some(levels) = &self.response.levels {
            return levels.clone();
        }
        let c = self.response.cutoffs.as_deref().unwrap_or_default();
        let mut labels = Vec::with_capacity(c.len() + 1);
        labels.push(format!("<={}", c[0]));
        for w in c.windows(2) {
            labels.push(format!("({},{}]", w[0], w[1]));
        }
        labels.push(format!(">{}", c[c.len() - 1]));
        labels
    }
}

fn check_unique(levels: &[String], column: &str) -> Result<(), DataError> {
    let mut seen = std::collections::HashSet::new();
    for l in levels {
        if !seen.insert(l) {
            return Err(DataError::Schema(format!("duplicate level `{l}` in column `{column}`")));
        }
    }
    Ok(())
}

/// Category of a numeric response under `cutoffs`: category `r` covers
/// `(c_{r-1}, c_r]`, so a value equal to a cutoff falls in the lower class.
pub fn bin_response(value: f64, cutoffs: &[f64]) -> usize {
    1 + cutoffs.iter().filter(|&&c| value > c).count()
}

fn is_missing(cell: &str) -> bool {
    let c = cell.trim();
    c.is_empty() || c.eq_ignore_ascii_case("na") || c.eq_ignore_ascii_case("nan")
}

/// Parses a delimited table with a header row according to `schema`.
pub fn load_dataset(text: &str, schema: &DatasetSchema) -> Result<OrdinalDataset, DataError> {
    let (features, feature_names, response) = parse_table(text, schema, true)?;
    OrdinalDataset::new(
        features,
        feature_names,
        response.expect("response requested"),
        schema.response.column.clone(),
        schema.level_labels(),
    )
}

/// Feature matrix and expanded feature names of a table; the response
/// column is neither required nor read.
pub fn load_features(text: &str, schema: &DatasetSchema) -> Result<(FeatureMatrix, Vec<String>), DataError> {
    let (features, names, _) = parse_table(text, schema, false)?;
    Ok((features, names))
}

type ParsedTable = (FeatureMatrix, Vec<String>, Option<Vec<usize>>);

fn parse_table(text: &str, schema: &DatasetSchema, with_response: bool) -> Result<ParsedTable, DataError> {
    schema.validate()?;
    let delimiter = schema.delimiter.unwrap_or(',') as u8;
    let mut reader =
        csv::ReaderBuilder::new().delimiter(delimiter).has_headers(true).flexible(true).from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let position =
        |name: &str| header.iter().position(|h| h == name).ok_or_else(|| DataError::MissingColumn(name.to_string()));
    let response_col = if with_response { Some(position(&schema.response.column)?) } else { None };
    let feature_cols: Vec<usize> = schema.features.iter().map(|f| position(f.name())).collect::<Result<_, _>>()?;

    let mut feature_names = Vec::new();
    for spec in &schema.features {
        match spec {
            FeatureSpec::Numeric { name } => feature_names.push(name.clone()),
            FeatureSpec::Categorical { name, levels } => {
                feature_names.extend(levels.iter().skip(1).map(|l| format!("{name}={l}")))
            }
        }
    }
    let level_index: Option<HashMap<&str, usize>> = schema
        .response
        .levels
        .as_ref()
        .map(|levels| levels.iter().enumerate().map(|(i, l)| (l.as_str(), i + 1)).collect());

    let p = feature_names.len();
    let mut data = Vec::new();
    let mut response = Vec::new();
    let mut n_records = 0;
    for (idx, record) in reader.records().enumerate() {
        let record = record?;
        let row = idx + 1;
        n_records = row;
        if record.len() != header.len() {
            return Err(DataError::RaggedRow { row, expected: header.len(), found: record.len() });
        }
        for (spec, &col) in schema.features.iter().zip(&feature_cols) {
            let cell = record[col].trim();
            if is_missing(cell) {
                return Err(DataError::MissingValue { row, column: spec.name().to_string() });
            }
            match spec {
                FeatureSpec::Numeric { name } => {
                    let v: f64 = cell.parse().map_err(|_| DataError::NonNumeric {
                        row,
                        column: name.clone(),
                        value: cell.to_string(),
                    })?;
                    if !v.is_finite() {
                        return Err(DataError::NonNumeric { row, column: name.clone(), value: cell.to_string() });
                    }
                    data.push(v);
                }
                FeatureSpec::Categorical { name, levels } => {
                    let level = levels.iter().position(|l| l == cell).ok_or_else(|| DataError::UnknownLevel {
                        row,
                        column: name.clone(),
                        value: cell.to_string(),
                    })?;
                    data.extend((1..levels.len()).map(|l| if l == level { 1.0 } else { 0.0 }));
                }
            }
        }
        let Some(response_col) = response_col else { continue };
        let cell = record[response_col].trim();
        if is_missing(cell) {
            return Err(DataError::MissingValue { row, column: schema.response.column.clone() });
        }
        let y = match (&level_index, &schema.response.cutoffs) {
            (Some(index), _) => {
                *index.get(cell).ok_or_else(|| DataError::UnknownResponse { row, value: cell.to_string() })?
            }
            (None, Some(cutoffs)) => {
                let v: f64 = cell.parse().map_err(|_| DataError::NonNumeric {
                    row,
                    column: schema.response.column.clone(),
                    value: cell.to_string(),
                })?;
                bin_response(v, cutoffs)
            }
            (None, None) => unreachable!("validated schema"),
        };
        response.push(y);
    }
    let n = n_records;
    let response = response_col.map(|_| response);
    Ok((FeatureMatrix::new(n, p, data)?, feature_names, response))
}

pub fn load_dataset_from_path(path: impl AsRef<Path>, schema: &DatasetSchema) -> Result<OrdinalDataset, DataError> {
    load_dataset(&std::fs::read_to_string(path)?, schema)
}

/// A 0/1 target derived from an ordinal response, together with the source
/// rows it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryTarget {
    pub values: Vec<u8>,
    pub row_indices: Vec<usize>,
    pub split: usize,
    pub conditional: bool,
}

impl BinaryTarget {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn count_ones(&self) -> usize {
        self.values.iter().filter(|&&v| v == 1).count()
    }
}

fn check_split(dataset: &OrdinalDataset, r: usize) -> Result<(), DataError> {
    if r < 2 || r > dataset.k() {
        return Err(DataError::SplitOutOfRange { r, k: dataset.k() });
    }
    Ok(())
}

/// Unconditional split variable: `1` iff the response is at least `r`.
pub fn split_indicator(dataset: &OrdinalDataset, r: usize) -> Result<BinaryTarget, DataError> {
    check_split(dataset, r)?;
    Ok(BinaryTarget {
        values: dataset.response().iter().map(|&y| u8::from(y >= r)).collect(),
        row_indices: (0..dataset.n()).collect(),
        split: r,
        conditional: false,
    })
}

/// Conditional split variable: rows with response in `{r-1, r}` only,
/// `1` iff the response equals `r`.
pub fn conditional_target(dataset: &OrdinalDataset, r: usize) -> Result<BinaryTarget, DataError> {
    check_split(dataset, r)?;
    let (row_indices, values) = dataset
        .response()
        .iter()
        .enumerate()
        .filter(|(_, &y)| y == r - 1 || y == r)
        .map(|(i, &y)| (i, u8::from(y == r)))
        .unzip();
    Ok(BinaryTarget { values, row_indices, split: r, conditional: true })
}

/// Random partition into a learning set of `n_learn` rows and a validation
/// set with the rest. Both keep the original row order.
pub fn random_split<R: Rng + ?Sized>(
    dataset: &OrdinalDataset,
    n_learn: usize,
    rng: &mut R,
) -> Result<(OrdinalDataset, OrdinalDataset), DataError> {
    let (learn, validation) = split_rows(dataset.n(), n_learn, rng)?;
    Ok((dataset.subset(&learn), dataset.subset(&validation)))
}

/// Row indices of a random learn/validation partition of `0..n`.
pub fn split_rows<R: Rng + ?Sized>(
    n: usize,
    n_learn: usize,
    rng: &mut R,
) -> Result<(Vec<usize>, Vec<usize>), DataError> {
    if n_learn < 1 || n_learn >= n {
        return Err(DataError::LearnSizeOutOfRange { n_learn, n });
    }
    let mut in_learn = vec![false; n];
    for i in rand::seq::index::sample(rng, n, n_learn) {
        in_learn[i] = true;
    }
    Ok((0..n).partition(|&i| in_learn[i]))
}
