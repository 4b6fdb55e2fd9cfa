//! Evaluation metrics for a system on a split, plus two diagnostics: the
//! empirical-vs-population objective gap and a finite-grid discrepancy
//! distance between two samples.
//!
//! All metrics use hard 0-1 losses and hard assignments. Group risks are
//! empirical estimates on whatever split is evaluated.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::baselines::{Assigner, AttributeSpec};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::models::{GroupAssigner, LogisticModel, TrainedSystem};
use crate::objective::{self, build_loss_table, LossTable};
use crate::rng::Stream;

/// Fraction of samples whose assigned classifier has loss no higher than
/// the pooled classifier and every decoupled classifier.
pub fn prob_fwh(table: &LossTable) -> f64 {
    let n = table.len();
    let ok = (0..n)
        .filter(|&i| {
            let own = table.decoupled_loss(i, table.assignment(i));
            table.row(i).iter().all(|&l| own <= l)
        })
        .count();
    ok as f64 / n as f64
}

/// Groups whose own classifier is worse than the pooled one, plus ordered
/// pairs `(k, j)` where group `k` has lower risk under classifier `j`.
/// Empty groups are skipped.
pub fn violations(table: &LossTable) -> usize {
    let k = table.k();
    let mut count = 0;
    for g in 0..k {
        let Some(own) = table.group_risk(g, g + 1) else {
            continue;
        };
        if own > table.group_risk(g, 0).expect("nonempty") {
            count += 1;
        }
        for j in (0..k).filter(|&j| j != g) {
            if own > table.group_risk(g, j + 1).expect("nonempty") {
                count += 1;
            }
        }
    }
    count
}

/// Largest per-group risk reduction of the own classifier over the pooled one.
pub fn max_gain(table: &LossTable) -> Option<f64> {
    (0..table.k())
        .filter_map(|g| Some(table.group_risk(g, 0)? - table.group_risk(g, g + 1)?))
        .reduce(f64::max)
}

/// Largest risk excess of another group's classifier over the own one,
/// `max_{k != k'} R_k(h_k') - R_k(h_k)`. Despite the name this is a maximum;
/// higher means groups envy each other's classifiers less.
pub fn min_envy(table: &LossTable) -> Option<f64> {
    let k = table.k();
    let mut best: Option<f64> = None;
    for g in 0..k {
        let Some(own) = table.group_risk(g, g + 1) else {
            continue;
        };
        for j in (0..k).filter(|&j| j != g) {
            let gap = table.group_risk(g, j + 1).expect("nonempty") - own;
            best = Some(best.map_or(gap, |b: f64| b.max(gap)));
        }
    }
    best
}

/// Largest pairwise accuracy gap across reference groups.
pub fn disparity(correct: &[bool], groups: &[&str]) -> f64 {
    let mut tally: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for (&c, &g) in correct.iter().zip(groups) {
        let e = tally.entry(g).or_default();
        e.0 += usize::from(c);
        e.1 += 1;
    }
    let accs: Vec<f64> = tally.values().map(|(c, n)| *c as f64 / *n as f64).collect();
    let max = accs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = accs.iter().copied().fold(f64::INFINITY, f64::min);
    max - min
}

/// Disparity of the assigned classifiers minus disparity of the pooled
/// classifier, over reference groups given per sample.
pub fn delta_disparity_from(table: &LossTable, groups: &[&str]) -> f64 {
    let n = table.len();
    let assigned: Vec<bool> = (0..n).map(|i| table.decoupled_loss(i, table.assignment(i)) == 0.0).collect();
    let pooled: Vec<bool> = (0..n).map(|i| table.pooled_loss(i) == 0.0).collect();
    disparity(&assigned, groups) - disparity(&pooled, groups)
}

/// [`delta_disparity_from`] with reference groups from a sensitive attribute.
pub fn delta_disparity(system: &TrainedSystem, data: &Dataset, groups_by: &AttributeSpec) -> Result<f64> {
    let table = build_loss_table(system, data)?;
    let groups = reference_groups(data, groups_by)?;
    let refs: Vec<&str> = groups.iter().map(String::as_str).collect();
    Ok(delta_disparity_from(&table, &refs))
}

fn reference_groups(data: &Dataset, by: &AttributeSpec) -> Result<Vec<String>> {
    let col = data.require_sensitive()?.column(&by.name)?;
    col.iter().map(|v| by.category(v)).collect()
}

/// Per-group distribution over attribute-value combinations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Composition {
    pub attributes: Vec<String>,
    /// Every combination of observed attribute values, in sorted order.
    pub cells: Vec<Vec<String>>,
    /// `proportions[k][c]`: share of group `k` falling in `cells[c]`; rows
    /// of empty groups are all zero.
    pub proportions: Vec<Vec<f64>>,
}

pub fn composition(assignments: &[usize], k: usize, data: &Dataset, attributes: &[AttributeSpec]) -> Result<Composition> {
    if attributes.is_empty() {
        return Err(Error::invalid("composition needs at least one attribute"));
    }
    if assignments.len() != data.len() {
        return Err(Error::DimensionMismatch {
            expected: data.len(),
            got: assignments.len(),
        });
    }
    let columns = attributes
        .iter()
        .map(|a| reference_groups(data, a))
        .collect::<Result<Vec<_>>>()?;
    let levels: Vec<Vec<String>> = columns
        .iter()
        .map(|c| {
            let mut v = c.clone();
            v.sort();
            v.dedup();
            v
        })
        .collect();
    let mut cells: Vec<Vec<String>> = vec![Vec::new()];
    for lv in &levels {
        cells = cells
            .into_iter()
            .flat_map(|prefix| {
                lv.iter().map(move |v| {
                    let mut c = prefix.clone();
                    c.push(v.clone());
                    c
                })
            })
            .collect();
    }
    let index: BTreeMap<&Vec<String>, usize> = cells.iter().enumerate().map(|(i, c)| (c, i)).collect();
    let mut counts = vec![vec![0usize; cells.len()]; k];
    for (i, &g) in assignments.iter().enumerate() {
        let key: Vec<String> = columns.iter().map(|c| c[i].clone()).collect();
        counts[g][index[&key]] += 1;
    }
    let proportions = counts
        .iter()
        .map(|row| {
            let total: usize = row.iter().sum();
            row.iter()
                .map(|&c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
                .collect()
        })
        .collect();
    Ok(Composition {
        attributes: attributes.iter().map(ToString::to_string).collect(),
        cells,
        proportions,
    })
}

/// What to compute beyond the always-present metrics.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub disparity_by: Option<AttributeSpec>,
    pub composition_by: Vec<AttributeSpec>,
}

/// All evaluation quantities of one system on one split.
///
/// Partition metrics are `None` for a system without a partition (the
/// pooled classifier alone).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub k: usize,
    pub prob_fwh: Option<f64>,
    pub accuracy: f64,
    pub violations: Option<usize>,
    pub max_gain: Option<f64>,
    pub min_envy: Option<f64>,
    pub delta_disparity: Option<f64>,
    pub pooled_accuracy: f64,
    /// Exact fairness objective; `None` when a group is empty.
    pub objective: Option<f64>,
    pub group_sizes: Vec<usize>,
    pub min_group_size: usize,
    pub composition: Option<Composition>,
    pub flags: Vec<String>,
}

fn is_unpartitioned(system: &TrainedSystem) -> bool {
    matches!(system.group, GroupAssigner::Rule(Assigner::Constant)) && system.k() == 1
}

pub fn evaluate(system: &TrainedSystem, data: &Dataset, opts: &EvalOptions) -> Result<EvalReport> {
    let table = build_loss_table(system, data)?;
    let n = table.len();
    let mut flags = Vec::new();
    let partitioned = !is_unpartitioned(system);
    if !partitioned {
        flags.push("no_partition".to_string());
    }
    let empty = table.empty_groups();
    if !empty.is_empty() {
        flags.push(format!("empty_groups:{}", join(&empty)));
        log::warn!("groups {empty:?} are empty on this split; they are excluded from group metrics");
    }
    let pooled_accuracy = (0..n).filter(|&i| table.pooled_loss(i) == 0.0).count() as f64 / n as f64;
    let delta_disparity = match &opts.disparity_by {
        Some(by) if data.sensitive().is_some() => {
            let groups = reference_groups(data, by)?;
            let refs: Vec<&str> = groups.iter().map(String::as_str).collect();
            Some(delta_disparity_from(&table, &refs))
        }
        Some(_) => {
            return Err(Error::MissingColumn("<sensitive attributes>".into()));
        }
        None => None,
    };
    let composition = if opts.composition_by.is_empty() {
        None
    } else {
        Some(composition(table.assignments(), table.k(), data, &opts.composition_by)?)
    };
    Ok(EvalReport {
        n,
        k: table.k(),
        prob_fwh: partitioned.then(|| prob_fwh(&table)),
        accuracy: objective::assigned_accuracy(&table),
        violations: partitioned.then(|| violations(&table)),
        max_gain: if partitioned { max_gain(&table) } else { None },
        min_envy: if partitioned { min_envy(&table) } else { None },
        delta_disparity,
        pooled_accuracy,
        objective: objective::exact_objective(&table).ok(),
        group_sizes: table.group_sizes().to_vec(),
        min_group_size: table.min_group_size(),
        composition,
        flags,
    })
}

fn join(v: &[usize]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("+")
}

impl EvalReport {
    /// Column names of [`EvalReport::csv_values`].
    pub const CSV_HEADER: [&'static str; 12] = [
        "n",
        "k",
        "prob_fwh",
        "accuracy",
        "violations",
        "max_gain",
        "min_envy",
        "delta_disparity",
        "pooled_accuracy",
        "objective",
        "min_group_size",
        "flags",
    ];

    /// One CSV row; absent values are empty cells.
    pub fn csv_values(&self) -> Vec<String> {
        let f = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
        vec![
            self.n.to_string(),
            self.k.to_string(),
            f(self.prob_fwh),
            format!("{}", self.accuracy),
            self.violations.map(|v| v.to_string()).unwrap_or_default(),
            f(self.max_gain),
            f(self.min_envy),
            f(self.delta_disparity),
            format!("{}", self.pooled_accuracy),
            f(self.objective),
            self.min_group_size.to_string(),
            self.flags.join(";"),
        ]
    }

    /// Flat key/value document (group sizes and composition cells get
    /// indexed keys).
    pub fn to_flat_map(&self) -> BTreeMap<String, serde_json::Value> {
        let mut m = BTreeMap::new();
        for (k, v) in Self::CSV_HEADER.iter().zip(self.csv_values()) {
            if *k == "flags" {
                continue;
            }
            let value = serde_json::from_str::<serde_json::Number>(&v)
                .map_or(serde_json::Value::Null, serde_json::Value::Number);
            m.insert(k.to_string(), value);
        }
        m.insert("flags".into(), serde_json::json!(self.flags));
        for (g, s) in self.group_sizes.iter().enumerate() {
            m.insert(format!("group_size.{g}"), serde_json::json!(s));
        }
        if let Some(c) = &self.composition {
            for (g, row) in c.proportions.iter().enumerate() {
                for (cell, p) in c.cells.iter().zip(row) {
                    m.insert(format!("composition.{g}.{}", cell.join("|")), serde_json::json!(p));
                }
            }
        }
        m
    }
}

/// Anything that can produce fresh i.i.d. samples on demand.
pub trait Population {
    fn sample(&self, n: usize, seed: u64) -> Result<Dataset>;
}

impl Population for crate::data::SyntheticParams {
    fn sample(&self, n: usize, seed: u64) -> Result<Dataset> {
        crate::data::gen_synthetic(n, self.delta, self.sigma, seed)
    }
}

/// One Monte Carlo trial of the empirical-vs-population objective gap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapTrial {
    /// Smallest group size in the trial sample (0 if a group is empty).
    pub min_group_size: usize,
    /// `|obj - obj_hat|`; `None` when a group was empty.
    pub gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapStudy {
    /// Objective on the reference pool, standing in for the population value.
    pub reference_objective: f64,
    pub trials: Vec<GapTrial>,
}

impl GapStudy {
    /// Share of unflagged trials with gap at most `eps`.
    pub fn frequency_within(&self, eps: f64) -> f64 {
        let gaps: Vec<f64> = self.trials.iter().filter_map(|t| t.gap).collect();
        gaps.iter().filter(|&&g| g <= eps).count() as f64 / gaps.len() as f64
    }

    pub fn median_gap(&self) -> f64 {
        let mut gaps: Vec<f64> = self.trials.iter().filter_map(|t| t.gap).collect();
        gaps.sort_by(f64::total_cmp);
        let m = gaps.len() / 2;
        if gaps.len() % 2 == 1 {
            gaps[m]
        } else {
            (gaps[m - 1] + gaps[m]) / 2.0
        }
    }

    /// Smallest group size over unflagged trials.
    pub fn min_group_size(&self) -> usize {
        self.trials.iter().filter(|t| t.gap.is_some()).map(|t| t.min_group_size).min().unwrap_or(0)
    }
}

/// Hoeffding-plus-union-bound probability that the empirical objective lies
/// within `eps` of the population objective: `1 - 2K(K+1) exp(-2 eps^2 n_min / 9)`.
pub fn gap_probability_bound(eps: f64, k: usize, min_group_size: usize) -> f64 {
    let kf = k as f64;
    1.0 - 2.0 * kf * (kf + 1.0) * (-2.0 * eps * eps * min_group_size as f64 / 9.0).exp()
}

/// Estimates the population objective on `pool_size` fresh rows, then draws
/// `trials` samples of `n_per_trial` rows and records each empirical gap.
/// Trial seeds derive from `seed`.
pub fn generalization_gap<P: Population + Sync>(
    system: &TrainedSystem,
    population: &P,
    pool_size: usize,
    n_per_trial: usize,
    trials: usize,
    seed: u64,
) -> Result<GapStudy> {
    use rayon::prelude::*;
    let pool = population.sample(pool_size, Stream::derived(seed, u64::MAX).next_u64())?;
    let reference_objective = objective::exact_objective(&build_loss_table(system, &pool)?)?;
    let trials = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let sample = population.sample(n_per_trial, Stream::derived(seed, t).next_u64())?;
            let table = build_loss_table(system, &sample)?;
            Ok(match objective::exact_objective(&table) {
                Ok(obj) => GapTrial {
                    min_group_size: table.min_group_size(),
                    gap: Some((reference_objective - obj).abs()),
                },
                Err(Error::EmptyGroup(_)) => GapTrial {
                    min_group_size: 0,
                    gap: None,
                },
                Err(e) => return Err(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GapStudy {
        reference_objective,
        trials,
    })
}

/// Largest difference in disagreement rate between two samples over all
/// ordered pairs of a finite hypothesis grid.
pub fn discrepancy_estimate(a: &[Vec<f64>], b: &[Vec<f64>], grid: &[LogisticModel]) -> Result<f64> {
    if a.is_empty() || b.is_empty() || grid.is_empty() {
        return Err(Error::invalid("discrepancy needs nonempty samples and grid"));
    }
    let preds = |xs: &[Vec<f64>]| -> Vec<Vec<bool>> {
        grid.iter().map(|h| xs.iter().map(|x| h.predict(x) > 0.0).collect()).collect()
    };
    let pa = preds(a);
    let pb = preds(b);
    let rate = |p: &[Vec<bool>], i: usize, j: usize| {
        p[i].iter().zip(&p[j]).filter(|(u, v)| u != v).count() as f64 / p[i].len() as f64
    };
    let mut best = 0.0f64;
    for i in 0..grid.len() {
        for j in 0..grid.len() {
            if i != j {
                best = best.max((rate(&pa, i, j) - rate(&pb, i, j)).abs());
            }
        }
    }
    Ok(best)
}
