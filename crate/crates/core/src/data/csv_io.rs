use std::collections::BTreeSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use log::warn;

use super::{ColumnKind, ColumnSpec, Dataset, Schema, SensitiveTable};
use crate::error::{Error, Result};

/// Field values treated as missing.
pub const MISSING_TOKENS: [&str; 3] = ["", "?", "NA"];

fn is_missing(v: &str) -> bool {
    MISSING_TOKENS.contains(&v)
}

/// Loads a headed CSV file.
///
/// Columns in `sensitive_names` go to the sensitive table, the label column
/// is mapped onto ±1, numeric columns stay raw and categorical columns are
/// one-hot encoded (categories in sorted order). Rows with any missing
/// value are dropped.
pub fn load_csv(path: impl AsRef<Path>, label_name: &str, sensitive_names: &[String]) -> Result<Dataset> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut buf = Vec::new();
    File::open(path)?.read_to_end(&mut buf)?;
    if buf.iter().all(u8::is_ascii_whitespace) {
        return Err(Error::EmptyFile(path.to_path_buf()));
    }
    load_csv_from_reader(buf.as_slice(), label_name, sensitive_names).map_err(|e| match e {
        Error::EmptyFile(_) => Error::EmptyFile(path.to_path_buf()),
        other => other,
    })
}

pub fn load_csv_from_reader<R: Read>(
    reader: R,
    label_name: &str,
    sensitive_names: &[String],
) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let label_col = find(label_name)?;
    let sens_cols = sensitive_names
        .iter()
        .map(|s| find(s))
        .collect::<Result<Vec<_>>>()?;
    let feature_cols: Vec<usize> = (0..header.len())
        .filter(|j| *j != label_col && !sens_cols.contains(j))
        .collect();

    let mut records = Vec::new();
    let mut dropped = 0usize;
    for rec in rdr.records() {
        let rec = rec?;
        let fields: Vec<String> = rec.iter().map(str::to_string).collect();
        if fields.iter().any(|f| is_missing(f)) {
            dropped += 1;
            continue;
        }
        records.push(fields);
    }
    if dropped > 0 {
        warn!("dropped {dropped} rows with missing values");
    }
    if records.is_empty() {
        return Err(Error::EmptyFile(Default::default()));
    }

    let labels = map_labels(records.iter().map(|r| r[label_col].as_str()), label_name)?;

    let mut columns = Vec::with_capacity(feature_cols.len());
    let mut feature_names = Vec::new();
    for &j in &feature_cols {
        let numeric = records.iter().all(|r| r[j].parse::<f64>().is_ok_and(f64::is_finite));
        let first_feature = feature_names.len();
        let kind = if numeric {
            feature_names.push(header[j].clone());
            ColumnKind::Numeric { stats: None }
        } else {
            let cats: BTreeSet<&str> = records.iter().map(|r| r[j].as_str()).collect();
            let categories: Vec<String> = cats.into_iter().map(str::to_string).collect();
            feature_names.extend(categories.iter().map(|c| format!("{}={}", header[j], c)));
            ColumnKind::Categorical { categories }
        };
        columns.push(ColumnSpec {
            name: header[j].clone(),
            kind,
            first_feature,
        });
    }

    let d = feature_names.len();
    let mut features = Vec::with_capacity(records.len() * d);
    for r in &records {
        for (spec, &j) in columns.iter().zip(&feature_cols) {
            match &spec.kind {
                ColumnKind::Numeric { .. } => features.push(r[j].parse::<f64>().expect("checked numeric")),
                ColumnKind::Categorical { categories } => {
                    features.extend(categories.iter().map(|c| if *c == r[j] { 1.0 } else { 0.0 }))
                }
            }
        }
    }

    let sensitive = (!sens_cols.is_empty()).then(|| SensitiveTable {
        names: sensitive_names.to_vec(),
        rows: records
            .iter()
            .map(|r| sens_cols.iter().map(|&j| r[j].clone()).collect())
            .collect(),
    });
    let schema = Schema {
        feature_names,
        label_name: label_name.to_string(),
        sensitive_names: sensitive_names.to_vec(),
        columns,
    };
    Dataset::new(features, labels, sensitive, schema)
}

/// {0,1} and {-1,+1} map numerically (0 -> -1); any other pair of distinct
/// values maps the lexicographically first to -1.
fn map_labels<'a>(values: impl Iterator<Item = &'a str> + Clone, column: &str) -> Result<Vec<f64>> {
    let distinct: BTreeSet<&str> = values.clone().collect();
    let numeric: Option<BTreeSet<i64>> = distinct
        .iter()
        .map(|v| v.parse::<f64>().ok().filter(|x| x.fract() == 0.0).map(|x| x as i64))
        .collect();
    if let Some(nums) = &numeric {
        if nums.len() > 2 {
            return Err(Error::LabelNotBinary {
                column: column.to_string(),
                count: nums.len(),
            });
        }
        let zero_one = nums.iter().all(|v| *v == 0 || *v == 1);
        let signed = nums.iter().all(|v| *v == -1 || *v == 1);
        if zero_one || signed {
            return Ok(values
                .map(|v| if v.parse::<f64>().unwrap() > 0.0 { 1.0 } else { -1.0 })
                .collect());
        }
    }
    if distinct.len() > 2 {
        return Err(Error::LabelNotBinary {
            column: column.to_string(),
            count: distinct.len(),
        });
    }
    let negative = *distinct.iter().next().expect("nonempty");
    Ok(values.map(|v| if v == negative { -1.0 } else { 1.0 }).collect())
}

/// Writes features, sensitive attributes and the ±1 label, in that column order.
pub fn write_csv<W: Write>(dataset: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let schema = dataset.schema();
    let sens_names: Vec<String> = dataset.sensitive().map(|s| s.names.clone()).unwrap_or_default();
    let mut header: Vec<&str> = schema.feature_names.iter().map(String::as_str).collect();
    header.extend(sens_names.iter().map(String::as_str));
    header.push(&schema.label_name);
    w.write_record(&header)?;
    for i in 0..dataset.len() {
        let mut rec: Vec<String> = dataset.row(i).iter().map(|v| format!("{v:?}")).collect();
        if let Some(s) = dataset.sensitive_row(i) {
            rec.extend(s.iter().cloned());
        }
        rec.push(if dataset.label(i) > 0.0 { "1" } else { "-1" }.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
