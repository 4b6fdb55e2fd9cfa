//! Comparison methods: fixed partitions (sensitive attribute, attribute
//! intersection, k-means, the hand-written Arrest rule) with one logistic
//! classifier fitted per group.

mod attribute;
mod kmeans;
mod manual;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, SensitiveTable};
use crate::error::{Error, Result};
use crate::models::{GroupAssigner, TrainedSystem};
use crate::training::{fit_logistic, train_pooled, SgdConfig, TrainConfig};

pub use attribute::{intersection_partition, trivial_partition, AttributeSpec, Binarize, DEFAULT_CELL_CAP};
pub use kmeans::{kmeans_partition, KMeansState};
pub use manual::{manual_arrest_partition, ManualArrestSpec};

/// Where a partition came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionSource {
    Attribute,
    Kmeans,
    Intersection,
    Manual,
    Learned,
    Whole,
}

/// Rule that assigns any row, seen or unseen, to a group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Assigner {
    /// Everything in group 0 (the pooled classifier on its own).
    Constant,
    /// Lookup on the (binarized) values of sensitive attributes; unseen
    /// combinations go to `fallback`.
    Cells {
        attributes: Vec<AttributeSpec>,
        cells: Vec<(Vec<String>, usize)>,
        fallback: usize,
    },
    /// Nearest centroid in model-feature space, lowest index on ties.
    Nearest { centroids: Vec<Vec<f64>> },
    /// Hand-written Arrest rule with a seeded coin for the remaining rows.
    ManualArrest { spec: ManualArrestSpec, seed: u64 },
}

impl Assigner {
    pub fn assign(&self, x: &[f64], row: Option<&[String]>, table: Option<&SensitiveTable>) -> Result<usize> {
        match self {
            Assigner::Constant => Ok(0),
            Assigner::Cells {
                attributes,
                cells,
                fallback,
            } => {
                let key = attribute::cell_key(attributes, sensitive(row, table)?)?;
                Ok(cells
                    .iter()
                    .find(|(k, _)| *k == key)
                    .map_or(*fallback, |(_, g)| *g))
            }
            Assigner::Nearest { centroids } => Ok(kmeans::nearest(centroids, x).0),
            Assigner::ManualArrest { spec, seed } => spec.assign(x, sensitive(row, table)?, *seed),
        }
    }

    /// Whether groups depend on sensitive attributes at assignment time.
    pub fn needs_sensitive(&self) -> bool {
        matches!(self, Assigner::Cells { .. } | Assigner::ManualArrest { .. })
    }
}

fn sensitive<'a>(row: Option<&'a [String]>, table: Option<&'a SensitiveTable>) -> Result<(&'a [String], &'a [String])> {
    match (row, table) {
        (Some(r), Some(t)) => Ok((t.names.as_slice(), r)),
        _ => Err(Error::MissingColumn("<sensitive attributes>".into())),
    }
}

/// Hard assignment of every row to one of `k` groups, plus the rule that
/// reproduces it on new rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub assignment: Vec<usize>,
    pub k: usize,
    pub source: PartitionSource,
    pub assigner: Assigner,
}

impl Partition {
    pub fn group_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.assignment {
            sizes[a] += 1;
        }
        sizes
    }

    /// Everything in one group.
    pub fn whole(n: usize) -> Self {
        Partition {
            assignment: vec![0; n],
            k: 1,
            source: PartitionSource::Whole,
            assigner: Assigner::Constant,
        }
    }

    /// Re-applies the assigner to every row of `data`.
    pub fn reassign(&self, data: &Dataset) -> Result<Vec<usize>> {
        (0..data.len())
            .map(|i| self.assigner.assign(data.row(i), data.sensitive_row(i), data.sensitive()))
            .collect()
    }

    /// `row,group` export.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["row", "group"])?;
        for (i, g) in self.assignment.iter().enumerate() {
            w.write_record([i.to_string(), g.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Fits one logistic classifier per group on that group's rows and a pooled
/// classifier on all rows. The partition's assigner routes samples at
/// evaluation time.
pub fn train_on_partition(train: &Dataset, partition: &Partition, sgd: &SgdConfig) -> Result<TrainedSystem> {
    if partition.assignment.len() != train.len() {
        return Err(Error::DimensionMismatch {
            expected: train.len(),
            got: partition.assignment.len(),
        });
    }
    let mut rows = vec![Vec::new(); partition.k];
    for (i, &g) in partition.assignment.iter().enumerate() {
        rows[g].push(i);
    }
    if let Some(g) = rows.iter().position(Vec::is_empty) {
        return Err(Error::EmptyGroup(g));
    }
    let decoupled = rows
        .iter()
        .map(|r| fit_logistic(train, r, sgd, crate::training::POOLED_TAG).map(|(h, _)| h))
        .collect::<Result<Vec<_>>>()?;
    let pooled = train_pooled(train, sgd)?;
    Ok(TrainedSystem {
        group: GroupAssigner::Rule(partition.assigner.clone()),
        decoupled,
        pooled,
        config: TrainConfig {
            k: partition.k,
            batch_size: sgd.batch_size,
            epochs: sgd.epochs,
            lr_group: 0.0,
            lr_decoupled: sgd.lr,
            momentum_decoupled: sgd.momentum,
            seed: sgd.seed,
            ..TrainConfig::default()
        },
    })
}

/// The pooled classifier alone, as a one-group system.
pub fn pooled_system(train: &Dataset, sgd: &SgdConfig) -> Result<TrainedSystem> {
    train_on_partition(train, &Partition::whole(train.len()), sgd)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_synthetic;
    use crate::objective::{assigned_accuracy, build_loss_table};

    fn sgd() -> SgdConfig {
        SgdConfig {
            lr: 0.1,
            epochs: 30,
            batch_size: 64,
            momentum: 0.9,
            l2: 0.0,
            seed: 3,
        }
    }

    #[test]
    fn single_group_matches_pooled() {
        let ds = gen_synthetic(300, 0.4, 0.3, 1).unwrap();
        let sys = pooled_system(&ds, &sgd()).unwrap();
        assert_eq!(sys.decoupled[0], sys.pooled);
        assert_eq!(sys.decoupled[0], train_pooled(&ds, &sgd()).unwrap());
    }

    #[test]
    fn intersection_beats_pooled_on_synthetic() {
        let ds = gen_synthetic(4000, 0.4, 0.3, 2).unwrap();
        let (train, test) = crate::data::split(&ds, &Default::default()).unwrap();
        let attrs = vec![AttributeSpec::raw("s1"), AttributeSpec::raw("s2")];
        let p = intersection_partition(&train, &attrs, DEFAULT_CELL_CAP).unwrap();
        let sys = train_on_partition(&train, &p, &sgd()).unwrap();
        let table = build_loss_table(&sys, &test).unwrap();
        let pooled_acc = (0..test.len())
            .filter(|&i| sys.pooled.predict(test.row(i)) == test.label(i))
            .count() as f64
            / test.len() as f64;
        assert!(assigned_accuracy(&table) > pooled_acc + 0.2);
    }

    #[test]
    fn flipped_groups_each_beat_pooled() {
        // Group 0 has y = sign(x); group 1 has y = -sign(x).
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        let mut assignment = Vec::new();
        let mut rng = crate::rng::Stream::new(4);
        for i in 0..400 {
            let x = rng.normal(0.0, 1.0);
            let g = i % 2;
            let y = if (x > 0.0) == (g == 0) { 1.0 } else { -1.0 };
            rows.push(vec![x, g as f64]);
            labels.push(y);
            assignment.push(g);
        }
        let ds = Dataset::from_rows(&rows, labels).unwrap();
        let p = Partition {
            assignment: assignment.clone(),
            k: 2,
            source: PartitionSource::Manual,
            assigner: Assigner::Nearest {
                centroids: vec![vec![0.0, 0.0], vec![0.0, 1.0]],
            },
        };
        assert_eq!(p.reassign(&ds).unwrap(), assignment);
        let sys = train_on_partition(&ds, &p, &sgd()).unwrap();
        for g in 0..2 {
            let idx: Vec<usize> = (0..ds.len()).filter(|&i| assignment[i] == g).collect();
            let acc = |h: &crate::models::LogisticModel| {
                idx.iter().filter(|&&i| h.predict(ds.row(i)) == ds.label(i)).count() as f64 / idx.len() as f64
            };
            assert!(acc(&sys.decoupled[g]) >= acc(&sys.pooled));
        }
    }

    #[test]
    fn deterministic_fit() {
        let ds = gen_synthetic(200, 0.4, 0.3, 5).unwrap();
        let p = trivial_partition(&ds, &AttributeSpec::raw("s1")).unwrap();
        assert_eq!(
            train_on_partition(&ds, &p, &sgd()).unwrap(),
            train_on_partition(&ds, &p, &sgd()).unwrap()
        );
    }

    #[test]
    fn empty_group_rejected() {
        let ds = gen_synthetic(10, 0.4, 0.3, 5).unwrap();
        let p = Partition {
            assignment: vec![0; 10],
            k: 2,
            source: PartitionSource::Manual,
            assigner: Assigner::Constant,
        };
        assert!(matches!(train_on_partition(&ds, &p, &sgd()), Err(Error::EmptyGroup(1))));
    }

    #[test]
    fn partition_csv() {
        let p = Partition::whole(2);
        let mut out = Vec::new();
        p.write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "row,group\n0,0\n1,0\n");
    }
}
