//! Tabular datasets: construction, CSV I/O, preprocessing and splitting.

mod csv_io;
mod preprocess;
mod split;
mod synthetic;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use csv_io::{load_csv, load_csv_from_reader, write_csv, MISSING_TOKENS};
pub use preprocess::{apply_standardization, standardize, CENTER_ONLY_STD};
pub use split::{split, split_indices, SplitSpec};
pub use synthetic::{gen_synthetic, SyntheticParams};

/// Per-original-column preprocessing record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnKind {
    /// Raw numeric column; `stats` is `(mean, std)` once standardized.
    Numeric { stats: Option<(f64, f64)> },
    /// One-hot encoded column; one output feature per category, in this order.
    Categorical { categories: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    /// Index of the first model-feature column produced by this column.
    pub first_feature: usize,
}

impl ColumnSpec {
    pub fn width(&self) -> usize {
        match &self.kind {
            ColumnKind::Numeric { .. } => 1,
            ColumnKind::Categorical { categories } => categories.len(),
        }
    }
}

/// Column layout and preprocessing statistics of a dataset.
///
/// Numeric statistics are population mean and standard deviation (divide
/// by n) over training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub feature_names: Vec<String>,
    pub label_name: String,
    pub sensitive_names: Vec<String>,
    pub columns: Vec<ColumnSpec>,
}

impl Schema {
    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }

    /// Stable digest of the model-input layout (names and order).
    pub fn fingerprint(&self) -> String {
        fingerprint_of(&self.feature_names)
    }

    /// Same layout, ignoring preprocessing statistics.
    pub fn same_layout(&self, other: &Schema) -> bool {
        self.feature_names == other.feature_names
            && self.columns.len() == other.columns.len()
            && self
                .columns
                .iter()
                .zip(&other.columns)
                .all(|(a, b)| a.name == b.name && a.width() == b.width())
    }

    /// Maps an output feature column back to `(original column, category)`.
    pub fn feature_origin(&self, feature: usize) -> Option<(&str, Option<&str>)> {
        self.columns.iter().find_map(|c| {
            let rel = feature.checked_sub(c.first_feature)?;
            if rel >= c.width() {
                return None;
            }
            match &c.kind {
                ColumnKind::Numeric { .. } => Some((c.name.as_str(), None)),
                ColumnKind::Categorical { categories } => {
                    Some((c.name.as_str(), Some(categories[rel].as_str())))
                }
            }
        })
    }

    /// Recovers the category of a one-hot column from an encoded row.
    pub fn decode_category<'a>(&'a self, row: &[f64], column: &str) -> Option<&'a str> {
        let spec = self.columns.iter().find(|c| c.name == column)?;
        match &spec.kind {
            ColumnKind::Categorical { categories } => categories
                .iter()
                .enumerate()
                .find(|(j, _)| row[spec.first_feature + j] == 1.0)
                .map(|(_, c)| c.as_str()),
            ColumnKind::Numeric { .. } => None,
        }
    }
}

pub(crate) fn fingerprint_of(feature_names: &[String]) -> String {
    let mut h = Sha256::new();
    h.update((feature_names.len() as u64).to_le_bytes());
    for name in feature_names {
        h.update((name.len() as u64).to_le_bytes());
        h.update(name.as_bytes());
    }
    h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Categorical attributes kept out of the model inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitiveTable {
    pub names: Vec<String>,
    /// Row-major, `rows[i][j]` is attribute `names[j]` of sample `i`.
    pub rows: Vec<Vec<String>>,
}

impl SensitiveTable {
    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }

    pub fn column(&self, name: &str) -> Result<Vec<&str>> {
        let j = self.column_index(name)?;
        Ok(self.rows.iter().map(|r| r[j].as_str()).collect())
    }
}

/// Feature matrix, ±1 labels and optional sensitive attributes.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n: usize,
    d: usize,
    features: Vec<f64>,
    labels: Vec<f64>,
    sensitive: Option<SensitiveTable>,
    schema: Schema,
}

impl Dataset {
    /// Builds a dataset from row-major features; labels must be ±1.
    pub fn new(
        features: Vec<f64>,
        labels: Vec<f64>,
        sensitive: Option<SensitiveTable>,
        schema: Schema,
    ) -> Result<Self> {
        let n = labels.len();
        let d = schema.dim();
        if n == 0 {
            return Err(Error::invalid("dataset must have at least one row"));
        }
        if features.len() != n * d {
            return Err(Error::DimensionMismatch {
                expected: n * d,
                got: features.len(),
            });
        }
        if let Some(bad) = labels.iter().find(|&&y| y != 1.0 && y != -1.0) {
            return Err(Error::invalid(format!("label {bad} is not +1 or -1")));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("features contain non-finite values"));
        }
        if let Some(s) = &sensitive {
            if s.rows.len() != n || s.rows.iter().any(|r| r.len() != s.names.len()) {
                return Err(Error::invalid("sensitive table shape does not match dataset"));
            }
        }
        Ok(Self {
            n,
            d,
            features,
            labels,
            sensitive,
            schema,
        })
    }

    /// Numeric-only dataset with generated feature names `f0..f{d-1}`.
    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<f64>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::invalid("ragged feature rows"));
        }
        let names: Vec<String> = (0..d).map(|j| format!("f{j}")).collect();
        let schema = Schema::numeric(&names, "y", &[]);
        Self::new(rows.concat(), labels, None, schema)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.features.chunks_exact(self.d.max(1)).take(self.n)
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    pub fn sensitive(&self) -> Option<&SensitiveTable> {
        self.sensitive.as_ref()
    }

    pub fn sensitive_row(&self, i: usize) -> Option<&[String]> {
        self.sensitive.as_ref().map(|s| s.rows[i].as_slice())
    }

    pub fn require_sensitive(&self) -> Result<&SensitiveTable> {
        self.sensitive
            .as_ref()
            .ok_or_else(|| Error::MissingColumn("<sensitive attributes>".into()))
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut features = Vec::with_capacity(indices.len() * self.d);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        let sensitive = self.sensitive.as_ref().map(|s| SensitiveTable {
            names: s.names.clone(),
            rows: indices.iter().map(|&i| s.rows[i].clone()).collect(),
        });
        Self::new(features, labels, sensitive, self.schema.clone())
    }

    pub(crate) fn with_features(&self, features: Vec<f64>, schema: Schema) -> Result<Self> {
        Self::new(features, self.labels.clone(), self.sensitive.clone(), schema)
    }
}

impl Schema {
    pub(crate) fn numeric(names: &[String], label: &str, sensitive: &[String]) -> Self {
        Schema {
            feature_names: names.to_vec(),
            label_name: label.to_string(),
            sensitive_names: sensitive.to_vec(),
            columns: names
                .iter()
                .enumerate()
                .map(|(j, n)| ColumnSpec {
                    name: n.clone(),
                    kind: ColumnKind::Numeric { stats: None },
                    first_feature: j,
                })
                .collect(),
        }
    }
}
