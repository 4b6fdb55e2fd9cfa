use super::{ColumnKind, Dataset, Schema};
use crate::error::{Error, Result};

/// Columns whose training standard deviation falls below this are only centered.
pub const CENTER_ONLY_STD: f64 = 1e-12;

/// Z-scores every numeric feature column with training-set population
/// statistics and applies the same affine map to `others`. One-hot columns
/// pass through unchanged.
pub fn standardize(train: &Dataset, others: &[Dataset]) -> Result<(Dataset, Vec<Dataset>, Schema)> {
    for other in others {
        if !other.schema().same_layout(train.schema()) {
            return Err(Error::invalid("schema mismatch between datasets"));
        }
    }
    let n = train.len() as f64;
    let mut schema = train.schema().clone();
    let mut maps: Vec<(usize, f64, f64)> = Vec::new();
    for col in &mut schema.columns {
        if let ColumnKind::Numeric { stats } = &mut col.kind {
            let j = col.first_feature;
            let mean = train.rows().map(|r| r[j]).sum::<f64>() / n;
            let var = train.rows().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
            let std = var.sqrt();
            *stats = Some((mean, std));
            let scale = if std < CENTER_ONLY_STD { 1.0 } else { std };
            maps.push((j, mean, scale));
        }
    }
    let apply = |ds: &Dataset| -> Result<Dataset> {
        let d = ds.dim();
        let mut features = ds.features().to_vec();
        for row in features.chunks_exact_mut(d) {
            for &(j, mean, scale) in &maps {
                row[j] = (row[j] - mean) / scale;
            }
        }
        ds.with_features(features, schema.clone())
    };
    let train_out = apply(train)?;
    let others_out = others.iter().map(apply).collect::<Result<Vec<_>>>()?;
    Ok((train_out, others_out, schema))
}

/// Applies the statistics recorded in a fitted schema (from [`standardize`])
/// to a dataset with the same layout. Columns without statistics pass through.
pub fn apply_standardization(data: &Dataset, fitted: &Schema) -> Result<Dataset> {
    if !data.schema().same_layout(fitted) {
        return Err(Error::FingerprintMismatch {
            model: fitted.fingerprint(),
            data: data.schema().fingerprint(),
        });
    }
    let maps: Vec<(usize, f64, f64)> = fitted
        .columns
        .iter()
        .filter_map(|c| match c.kind {
            ColumnKind::Numeric { stats: Some((mean, std)) } => {
                Some((c.first_feature, mean, if std < CENTER_ONLY_STD { 1.0 } else { std }))
            }
            _ => None,
        })
        .collect();
    let d = data.dim();
    let mut features = data.features().to_vec();
    for row in features.chunks_exact_mut(d) {
        for &(j, mean, scale) in &maps {
            row[j] = (row[j] - mean) / scale;
        }
    }
    data.with_features(features, fitted.clone())
}
