use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Assigner, Partition, PartitionSource};
use crate::data::Dataset;
use crate::error::{Error, Result};

/// Largest number of attribute-value combinations an intersection partition may span.
pub const DEFAULT_CELL_CAP: usize = 32;

/// Two-way split of a sensitive attribute's values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Binarize {
    /// Numeric values below the threshold versus the rest.
    Below(f64),
    /// One value versus every other value.
    Equals(String),
}

/// A sensitive attribute, optionally binarized.
///
/// Parses from `name`, `name<threshold` or `name=value`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeSpec {
    pub name: String,
    pub binarize: Option<Binarize>,
}

impl AttributeSpec {
    pub fn raw(name: &str) -> Self {
        Self {
            name: name.to_string(),
            binarize: None,
        }
    }

    pub fn below(name: &str, threshold: f64) -> Self {
        Self {
            name: name.to_string(),
            binarize: Some(Binarize::Below(threshold)),
        }
    }

    /// Category of a raw value after binarization.
    pub fn category(&self, value: &str) -> Result<String> {
        match &self.binarize {
            None => Ok(value.to_string()),
            Some(Binarize::Below(t)) => {
                let v: f64 = value.parse().map_err(|_| {
                    Error::invalid(format!("attribute {}: {value:?} is not numeric", self.name))
                })?;
                Ok(if v < *t { format!("<{t}") } else { format!(">={t}") })
            }
            Some(Binarize::Equals(target)) => Ok(if value == target {
                target.clone()
            } else {
                format!("not {target}")
            }),
        }
    }
}

impl FromStr for AttributeSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some((name, t)) = s.split_once('<') {
            let t: f64 = t
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("bad threshold in {s:?}")))?;
            return Ok(AttributeSpec::below(name.trim(), t));
        }
        if let Some((name, v)) = s.split_once('=') {
            return Ok(AttributeSpec {
                name: name.trim().to_string(),
                binarize: Some(Binarize::Equals(v.trim().to_string())),
            });
        }
        if s.is_empty() {
            return Err(Error::invalid("empty attribute name"));
        }
        Ok(AttributeSpec::raw(s))
    }
}

impl fmt::Display for AttributeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.binarize {
            None => write!(f, "{}", self.name),
            Some(Binarize::Below(t)) => write!(f, "{}<{}", self.name, t),
            Some(Binarize::Equals(v)) => write!(f, "{}={}", self.name, v),
        }
    }
}

pub(crate) fn cell_key(attributes: &[AttributeSpec], (names, row): (&[String], &[String])) -> Result<Vec<String>> {
    attributes
        .iter()
        .map(|a| {
            let j = names
                .iter()
                .position(|n| *n == a.name)
                .ok_or_else(|| Error::MissingColumn(a.name.clone()))?;
            a.category(&row[j])
        })
        .collect()
}

/// Binarized cell key of every row.
pub(crate) fn row_keys(data: &Dataset, attributes: &[AttributeSpec]) -> Result<Vec<Vec<String>>> {
    let table = data.require_sensitive()?;
    for a in attributes {
        table.column_index(&a.name)?;
    }
    table
        .rows
        .iter()
        .map(|r| cell_key(attributes, (&table.names, r)))
        .collect()
}

/// One group per occupied combination of attribute values (sorted order).
/// Unseen combinations are routed to the largest training group.
pub fn intersection_partition(data: &Dataset, attributes: &[AttributeSpec], cap: usize) -> Result<Partition> {
    build_cells(data, attributes, cap, PartitionSource::Intersection)
}

/// Two groups keyed on one (possibly binarized) sensitive attribute.
pub fn trivial_partition(data: &Dataset, attribute: &AttributeSpec) -> Result<Partition> {
    let keys = row_keys(data, std::slice::from_ref(attribute))?;
    let distinct: BTreeSet<&Vec<String>> = keys.iter().collect();
    if distinct.len() != 2 {
        return Err(Error::invalid(format!(
            "attribute {attribute} has {} values; a trivial partition needs exactly 2 (supply a binarize rule)",
            distinct.len()
        )));
    }
    build_cells(data, std::slice::from_ref(attribute), usize::MAX, PartitionSource::Attribute)
}

fn build_cells(data: &Dataset, attributes: &[AttributeSpec], cap: usize, source: PartitionSource) -> Result<Partition> {
    if attributes.is_empty() {
        return Err(Error::invalid("attribute list is empty"));
    }
    let keys = row_keys(data, attributes)?;
    let combos: usize = (0..attributes.len())
        .map(|j| keys.iter().map(|k| &k[j]).collect::<BTreeSet<_>>().len())
        .product();
    if combos > cap {
        return Err(Error::invalid(format!(
            "attribute cross-product has {combos} cells, above the cap of {cap}"
        )));
    }
    let mut counts: BTreeMap<&Vec<String>, usize> = BTreeMap::new();
    for k in &keys {
        *counts.entry(k).or_default() += 1;
    }
    let cells: Vec<(Vec<String>, usize)> = counts.keys().enumerate().map(|(g, k)| ((*k).clone(), g)).collect();
    let sizes: Vec<usize> = counts.values().copied().collect();
    let fallback = (0..sizes.len()).fold(0, |best, g| if sizes[g] > sizes[best] { g } else { best });
    let lookup: BTreeMap<&Vec<String>, usize> = cells.iter().map(|(k, g)| (k, *g)).collect();
    let assignment = keys.iter().map(|k| lookup[k]).collect();
    Ok(Partition {
        assignment,
        k: cells.len(),
        source,
        assigner: Assigner::Cells {
            attributes: attributes.to_vec(),
            cells,
            fallback,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_synthetic, load_csv_from_reader};

    #[test]
    fn parse_specs() {
        assert_eq!("age<40".parse::<AttributeSpec>().unwrap(), AttributeSpec::below("age", 40.0));
        assert_eq!(
            "race=Caucasian".parse::<AttributeSpec>().unwrap().binarize,
            Some(Binarize::Equals("Caucasian".into()))
        );
        assert_eq!("s1".parse::<AttributeSpec>().unwrap(), AttributeSpec::raw("s1"));
        assert!("age<x".parse::<AttributeSpec>().is_err());
        assert_eq!(AttributeSpec::below("age", 40.0).to_string(), "age<40");
    }

    #[test]
    fn trivial_on_synthetic_matches_attribute() {
        let ds = gen_synthetic(200, 0.4, 0.3, 1).unwrap();
        let p = trivial_partition(&ds, &AttributeSpec::raw("s1")).unwrap();
        assert_eq!(p.k, 2);
        let s1 = ds.sensitive().unwrap().column("s1").unwrap();
        for (i, g) in p.assignment.iter().enumerate() {
            assert_eq!(*g == 1, s1[i] == "1");
        }
        assert_eq!(p.reassign(&ds).unwrap(), p.assignment);
    }

    #[test]
    fn age_threshold_gives_two_groups() {
        let csv = "age,x,y\n25,1,0\n39,2,1\n40,3,0\n61,4,1\n";
        let ds = load_csv_from_reader(csv.as_bytes(), "y", &["age".to_string()]).unwrap();
        let p = trivial_partition(&ds, &AttributeSpec::below("age", 40.0)).unwrap();
        assert_eq!(p.group_sizes(), vec![2, 2]);
        assert_eq!(p.assignment[0], p.assignment[1]);
        assert_ne!(p.assignment[1], p.assignment[2]);
    }

    #[test]
    fn three_categories_need_a_rule() {
        let csv = "c,x,y\na,1,0\nb,2,1\nc,3,0\n";
        let ds = load_csv_from_reader(csv.as_bytes(), "y", &["c".to_string()]).unwrap();
        assert!(trivial_partition(&ds, &AttributeSpec::raw("c")).is_err());
        assert!(trivial_partition(&ds, &"c=a".parse().unwrap()).is_ok());
        assert!(matches!(
            trivial_partition(&ds, &AttributeSpec::raw("zzz")),
            Err(Error::MissingColumn(_))
        ));
    }

    #[test]
    fn synthetic_intersection_has_four_cells() {
        let ds = gen_synthetic(400, 0.4, 0.3, 2).unwrap();
        let attrs = [AttributeSpec::raw("s1"), AttributeSpec::raw("s2")];
        let p = intersection_partition(&ds, &attrs, DEFAULT_CELL_CAP).unwrap();
        assert_eq!(p.k, 4);
        assert_eq!(p.reassign(&ds).unwrap(), p.assignment);
        let t = ds.sensitive().unwrap();
        for (i, g) in p.assignment.iter().enumerate() {
            let want = 2 * usize::from(t.rows[i][0] == "1") + usize::from(t.rows[i][1] == "1");
            assert_eq!(*g, want);
        }
    }

    #[test]
    fn single_attribute_intersection_equals_trivial() {
        let ds = gen_synthetic(100, 0.4, 0.3, 3).unwrap();
        let a = AttributeSpec::raw("s2");
        let p1 = trivial_partition(&ds, &a).unwrap();
        let p2 = intersection_partition(&ds, std::slice::from_ref(&a), DEFAULT_CELL_CAP).unwrap();
        assert_eq!(p1.assignment, p2.assignment);
    }

    #[test]
    fn cap_and_empty_list() {
        let ds = gen_synthetic(100, 0.4, 0.3, 3).unwrap();
        let attrs = [AttributeSpec::raw("s1"), AttributeSpec::raw("s2")];
        assert!(intersection_partition(&ds, &attrs, 3).is_err());
        assert!(intersection_partition(&ds, &[], DEFAULT_CELL_CAP).is_err());
    }

    #[test]
    fn unseen_combination_falls_back_to_largest_group() {
        let csv = "a,b,x,y\nu,p,1,0\nu,p,2,1\nu,q,3,0\nv,q,4,1\n";
        let ds = load_csv_from_reader(csv.as_bytes(), "y", &["a".into(), "b".into()]).unwrap();
        let p = intersection_partition(&ds, &["a".parse().unwrap(), "b".parse().unwrap()], 8).unwrap();
        assert_eq!(p.k, 3);
        let names = vec!["a".to_string(), "b".to_string()];
        let table = crate::data::SensitiveTable {
            names: names.clone(),
            rows: vec![vec!["v".into(), "p".into()]],
        };
        let g = p.assigner.assign(&[0.0], Some(&table.rows[0]), Some(&table)).unwrap();
        assert_eq!(g, p.assignment[0]);
    }
}
