use serde::{Deserialize, Serialize};

use super::{Assigner, Partition, PartitionSource};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::mix64;

/// Column names and value spellings for the hand-written Arrest partition:
/// non-white males under 45 form group 0, non-white females aged 25 to 45
/// form group 1, everyone else is split by a seeded coin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ManualArrestSpec {
    pub race_column: String,
    /// Values counted as white (compared case-insensitively).
    pub white_values: Vec<String>,
    pub sex_column: String,
    pub male_value: String,
    pub female_value: String,
    pub age_column: String,
    pub age_under_25: String,
    pub age_25_to_45: String,
    pub age_over_45: String,
}

impl Default for ManualArrestSpec {
    fn default() -> Self {
        Self {
            race_column: "race".into(),
            white_values: vec!["White".into(), "Caucasian".into()],
            sex_column: "sex".into(),
            male_value: "Male".into(),
            female_value: "Female".into(),
            age_column: "age_cat".into(),
            age_under_25: "Less than 25".into(),
            age_25_to_45: "25 - 45".into(),
            age_over_45: "Greater than 45".into(),
        }
    }
}

impl ManualArrestSpec {
    fn columns(&self) -> [&str; 3] {
        [&self.race_column, &self.sex_column, &self.age_column]
    }

    pub(crate) fn assign(&self, x: &[f64], (names, row): (&[String], &[String]), seed: u64) -> Result<usize> {
        let get = |col: &str| {
            names
                .iter()
                .position(|n| n == col)
                .map(|j| row[j].as_str())
                .ok_or_else(|| Error::MissingColumn(col.to_string()))
        };
        let race = get(&self.race_column)?;
        let sex = get(&self.sex_column)?;
        let age = get(&self.age_column)?;
        let non_white = !self.white_values.iter().any(|w| w.eq_ignore_ascii_case(race));
        let eq = |a: &str, b: &str| a.eq_ignore_ascii_case(b);
        let under_45 = eq(age, &self.age_under_25) || eq(age, &self.age_25_to_45);
        if non_white && eq(sex, &self.male_value) && under_45 {
            return Ok(0);
        }
        if non_white && eq(sex, &self.female_value) && eq(age, &self.age_25_to_45) {
            return Ok(1);
        }
        Ok(coin(seed, x, row))
    }
}

/// Seeded fair coin keyed on the row's content, so the same row always
/// lands in the same group.
fn coin(seed: u64, x: &[f64], row: &[String]) -> usize {
    let mut h = mix64(seed);
    for v in x {
        h = mix64(h ^ v.to_bits());
    }
    for s in row {
        for b in s.bytes() {
            h = mix64(h ^ u64::from(b));
        }
        h = mix64(h ^ 0xff);
    }
    (h >> 63) as usize
}

pub fn manual_arrest_partition(data: &Dataset, spec: &ManualArrestSpec, seed: u64) -> Result<Partition> {
    let table = data.require_sensitive()?;
    for col in spec.columns() {
        table.column_index(col)?;
    }
    let assigner = Assigner::ManualArrest {
        spec: spec.clone(),
        seed,
    };
    let assignment = (0..data.len())
        .map(|i| assigner.assign(data.row(i), data.sensitive_row(i), Some(table)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Partition {
        assignment,
        k: 2,
        source: PartitionSource::Manual,
        assigner,
    })
}
