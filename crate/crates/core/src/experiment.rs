//! Multi-seed experiments: every (method, hyperparameter candidate, repeat)
//! cell is split, standardized on its training part, fit, and evaluated on
//! the held-out part. Results aggregate to mean and standard deviation per
//! metric.
//!
//! Configs are TOML:
//!
//! ```toml
//! name = "synthetic"
//! repeats = 5
//!
//! [dataset]
//! kind = "synthetic"       # or "csv" with path, label, sensitive, binarize
//! n = 20000
//!
//! [split]
//! train_fraction = 0.75
//! seed = 0
//!
//! [eval]
//! disparity_by = "s1"
//!
//! [[methods]]
//! method = "dafh"
//! train = { k = 2, lambda = 10.0 }
//! grid = { lambda = [1.0, 10.0] }   # optional; cartesian product over train fields
//!
//! [[methods]]
//! method = "trivial"
//! attribute = "s1"
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{
    intersection_partition, kmeans_partition, manual_arrest_partition, pooled_system, train_on_partition,
    trivial_partition, AttributeSpec, ManualArrestSpec, DEFAULT_CELL_CAP,
};
use crate::data::{load_csv, split, standardize, Dataset, SplitSpec, SyntheticParams};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, EvalOptions, EvalReport};
use crate::models::TrainedSystem;
use crate::training::{train_dafh, TrainConfig};

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "DAFH_OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    pub methods: Vec<MethodConfig>,
}

fn default_name() -> String {
    "experiment".into()
}

fn default_repeats() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    Synthetic {
        #[serde(default = "synthetic_n")]
        n: usize,
        #[serde(default = "synthetic_delta")]
        delta: f64,
        #[serde(default = "synthetic_sigma")]
        sigma: f64,
        #[serde(default)]
        seed: u64,
    },
    Csv {
        path: PathBuf,
        label: String,
        #[serde(default)]
        sensitive: Vec<String>,
        /// Binarization rules (`age<25`, `race=White`) applied whenever a
        /// method or metric names the attribute without its own rule.
        #[serde(default)]
        binarize: Vec<String>,
    },
}

fn synthetic_n() -> usize {
    SyntheticParams::default().n
}

fn synthetic_delta() -> f64 {
    SyntheticParams::default().delta
}

fn synthetic_sigma() -> f64 {
    SyntheticParams::default().sigma
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            train_fraction: 0.75,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub disparity_by: Option<String>,
    pub composition_by: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodKind {
    Dafh,
    Pooled,
    Trivial,
    Cluster,
    LrAll,
    Manual,
}

impl MethodKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MethodKind::Dafh => "dafh",
            MethodKind::Pooled => "pooled",
            MethodKind::Trivial => "trivial",
            MethodKind::Cluster => "cluster",
            MethodKind::LrAll => "lr-all",
            MethodKind::Manual => "manual",
        }
    }
}

impl FromStr for MethodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "dafh" => MethodKind::Dafh,
            "pooled" => MethodKind::Pooled,
            "trivial" => MethodKind::Trivial,
            "cluster" => MethodKind::Cluster,
            "lr-all" => MethodKind::LrAll,
            "manual" => MethodKind::Manual,
            other => return Err(Error::invalid(format!("unknown method {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodConfig {
    pub method: MethodKind,
    /// Row name in reports; derived from the method when absent.
    #[serde(default)]
    pub label: Option<String>,
    /// `trivial`: the attribute to split on.
    #[serde(default)]
    pub attribute: Option<String>,
    /// `lr-all`: attributes whose value combinations form the groups.
    #[serde(default)]
    pub attributes: Vec<String>,
    #[serde(default)]
    pub cell_cap: Option<usize>,
    /// `cluster`: number of clusters (defaults to `train.k`).
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub max_iters: Option<usize>,
    #[serde(default)]
    pub manual: Option<ManualArrestSpec>,
    #[serde(default)]
    pub train: TrainConfig,
    /// Alternative values per training field; every combination is run and
    /// the one with the highest mean prob_fwh is reported.
    #[serde(default)]
    pub grid: BTreeMap<String, Vec<toml::Value>>,
}

impl MethodConfig {
    pub fn new(method: MethodKind) -> Self {
        Self {
            method,
            label: None,
            attribute: None,
            attributes: Vec::new(),
            cell_cap: None,
            k: None,
            max_iters: None,
            manual: None,
            train: TrainConfig::default(),
            grid: BTreeMap::new(),
        }
    }

    pub fn display_label(&self) -> String {
        if let Some(l) = &self.label {
            return l.clone();
        }
        let m = self.method.as_str();
        match self.method {
            MethodKind::Trivial => format!("{m}({})", self.attribute.as_deref().unwrap_or("?")),
            MethodKind::LrAll => format!("{m}({})", self.attributes.join(",")),
            MethodKind::Cluster => format!("{m}(k={})", self.k.unwrap_or(self.train.k)),
            _ => m.to_string(),
        }
    }

    /// Training configurations of every grid point, in a fixed order.
    pub fn candidates(&self) -> Result<Vec<TrainConfig>> {
        let base = toml::Value::try_from(&self.train).map_err(|e| Error::Config(e.to_string()))?;
        let mut points = vec![base];
        for (field, values) in &self.grid {
            if values.is_empty() {
                return Err(Error::Config(format!("grid field {field:?} has no values")));
            }
            points = points
                .into_iter()
                .flat_map(|p| {
                    values.iter().map(move |v| {
                        let mut p = p.clone();
                        p.as_table_mut().expect("table").insert(field.clone(), v.clone());
                        p
                    })
                })
                .collect();
        }
        points
            .into_iter()
            .map(|p| {
                let cfg: TrainConfig = p.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
                cfg.validate()?;
                Ok(cfg)
            })
            .collect()
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config; a relative dataset path resolves against the config's directory.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.is_file() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let mut cfg = Self::from_toml(&fs::read_to_string(path)?)?;
        if let DatasetConfig::Csv { path: data, .. } = &mut cfg.dataset {
            if data.is_relative() {
                if let Some(dir) = path.parent() {
                    *data = dir.join(&*data);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("at least one method is required".into()));
        }
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be at least 1".into()));
        }
        let mut labels: Vec<String> = self.methods.iter().map(MethodConfig::display_label).collect();
        labels.sort();
        if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Config(format!("duplicate method label {:?}", w[0])));
        }
        for m in &self.methods {
            m.candidates()?;
            match m.method {
                MethodKind::Trivial if m.attribute.is_none() => {
                    return Err(Error::Config("trivial needs `attribute`".into()))
                }
                MethodKind::LrAll if m.attributes.is_empty() => {
                    return Err(Error::Config("lr-all needs `attributes`".into()))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Digest of everything that determines the results: the parsed config
    /// and, for CSV datasets, the data file's bytes.
    pub fn hash(&self) -> Result<String> {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(self).map_err(|e| Error::Config(e.to_string()))?);
        if let DatasetConfig::Csv { path, .. } = &self.dataset {
            if !path.is_file() {
                return Err(Error::MissingFile(path.clone()));
            }
            h.update(fs::read(path)?);
        }
        Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn load_dataset(&self) -> Result<Dataset> {
        match &self.dataset {
            DatasetConfig::Synthetic { n, delta, sigma, seed } => crate::data::gen_synthetic(*n, *delta, *sigma, *seed),
            DatasetConfig::Csv {
                path, label, sensitive, ..
            } => load_csv(path, label, sensitive),
        }
    }

    /// Parses an attribute reference, applying the dataset's binarization
    /// rule when the reference is a bare name.
    pub fn attribute(&self, text: &str) -> Result<AttributeSpec> {
        let spec: AttributeSpec = text.parse()?;
        if spec.binarize.is_some() {
            return Ok(spec);
        }
        if let DatasetConfig::Csv { binarize, .. } = &self.dataset {
            for rule in binarize {
                let r: AttributeSpec = rule.parse()?;
                if r.name == spec.name {
                    return Ok(r);
                }
            }
        }
        Ok(spec)
    }

    fn eval_options(&self) -> Result<EvalOptions> {
        Ok(EvalOptions {
            disparity_by: self.eval.disparity_by.as_deref().map(|a| self.attribute(a)).transpose()?,
            composition_by: self
                .eval
                .composition_by
                .iter()
                .map(|a| self.attribute(a))
                .collect::<Result<_>>()?,
        })
    }

    /// Output directory: the config's, else the environment's, else `dafh-out`.
    pub fn resolved_output_dir(&self) -> PathBuf {
        self.output_dir
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("dafh-out"))
    }
}

/// Fits one method on a training split.
pub fn fit_method(
    config: &ExperimentConfig,
    method: &MethodConfig,
    train_cfg: &TrainConfig,
    train: &Dataset,
) -> Result<TrainedSystem> {
    let sgd = train_cfg.sgd();
    match method.method {
        MethodKind::Dafh => Ok(train_dafh(train, train_cfg, None)?.system),
        MethodKind::Pooled => pooled_system(train, &sgd),
        MethodKind::Trivial => {
            let attr = config.attribute(method.attribute.as_deref().unwrap_or_default())?;
            train_on_partition(train, &trivial_partition(train, &attr)?, &sgd)
        }
        MethodKind::LrAll => {
            let attrs = method
                .attributes
                .iter()
                .map(|a| config.attribute(a))
                .collect::<Result<Vec<_>>>()?;
            let p = intersection_partition(train, &attrs, method.cell_cap.unwrap_or(DEFAULT_CELL_CAP))?;
            train_on_partition(train, &p, &sgd)
        }
        MethodKind::Cluster => {
            let k = method.k.unwrap_or(train_cfg.k);
            let (p, _) = kmeans_partition(train, k, train_cfg.seed, method.max_iters.unwrap_or(100), 1e-9)?;
            train_on_partition(train, &p, &sgd)
        }
        MethodKind::Manual => {
            let spec = method.manual.clone().unwrap_or_default();
            train_on_partition(train, &manual_arrest_partition(train, &spec, train_cfg.seed)?, &sgd)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricStat {
    pub mean: f64,
    /// Population standard deviation (divide by `count`).
    pub std: f64,
    pub count: usize,
}

impl MetricStat {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Self {
            mean,
            std: var.sqrt(),
            count: values.len(),
        })
    }
}

/// Metrics aggregated per method, in report order.
pub const METRICS: [&str; 9] = [
    "prob_fwh",
    "accuracy",
    "violations",
    "max_gain",
    "min_envy",
    "delta_disparity",
    "pooled_accuracy",
    "objective",
    "min_group_size",
];

fn metric_value(r: &EvalReport, name: &str) -> Option<f64> {
    match name {
        "prob_fwh" => r.prob_fwh,
        "accuracy" => Some(r.accuracy),
        "violations" => r.violations.map(|v| v as f64),
        "max_gain" => r.max_gain,
        "min_envy" => r.min_envy,
        "delta_disparity" => r.delta_disparity,
        "pooled_accuracy" => Some(r.pooled_accuracy),
        "objective" => r.objective,
        "min_group_size" => Some(r.min_group_size as f64),
        _ => None,
    }
}

/// One evaluated (or failed) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub label: String,
    pub candidate: usize,
    pub repeat: usize,
    pub train_seed: u64,
    pub error: Option<String>,
    pub report: Option<EvalReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSummary {
    pub index: usize,
    pub train: TrainConfig,
    pub metrics: BTreeMap<String, MetricStat>,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub label: String,
    pub method: MethodKind,
    /// Index into `candidates` of the reported configuration.
    pub selected: usize,
    pub metrics: BTreeMap<String, MetricStat>,
    pub failed: usize,
    pub candidates: Vec<CandidateSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub name: String,
    pub version: String,
    pub config_hash: String,
    pub split_seed: u64,
    pub repeats: usize,
    pub methods: Vec<MethodSummary>,
    pub rows: Vec<CellRecord>,
}

impl AggregateReport {
    pub fn failed_cells(&self) -> usize {
        self.rows.iter().filter(|r| r.error.is_some()).count()
    }

    pub fn method(&self, label: &str) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.label == label)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("not an aggregate report: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.is_file() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// Writes per-cell reports, then `aggregate.json`, `raw.csv` and
    /// `summary.md`. The aggregate is written to a temporary name and renamed.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        let cells = dir.join("cells");
        fs::create_dir_all(&cells)?;
        for row in &self.rows {
            let name = format!("{}-c{}-r{}.json", sanitize(&row.label), row.candidate, row.repeat);
            let body = serde_json::to_string_pretty(row).map_err(|e| Error::Config(e.to_string()))?;
            fs::write(cells.join(name), body)?;
        }
        fs::write(dir.join("raw.csv"), self.raw_csv()?)?;
        fs::write(dir.join("summary.md"), render_markdown(self, &METRICS)?)?;
        let tmp = dir.join("aggregate.json.tmp");
        fs::write(&tmp, self.to_json()?)?;
        fs::rename(tmp, dir.join("aggregate.json"))?;
        Ok(())
    }

    /// One line per cell with every EvalReport column.
    pub fn raw_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["label", "candidate", "repeat", "train_seed", "error"];
        header.extend(EvalReport::CSV_HEADER);
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![
                r.label.clone(),
                r.candidate.to_string(),
                r.repeat.to_string(),
                r.train_seed.to_string(),
                r.error.clone().unwrap_or_default(),
            ];
            match &r.report {
                Some(rep) => rec.extend(rep.csv_values()),
                None => rec.extend(std::iter::repeat(String::new()).take(EvalReport::CSV_HEADER.len())),
            }
            w.write_record(&rec)?;
        }
        String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?)
            .map_err(|e| Error::invalid(e.to_string()))
    }
}

fn sanitize(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn summarize(reports: &[&EvalReport]) -> BTreeMap<String, MetricStat> {
    METRICS
        .iter()
        .filter_map(|&m| {
            let values: Vec<f64> = reports.iter().filter_map(|r| metric_value(r, m)).collect();
            MetricStat::of(&values).map(|s| (m.to_string(), s))
        })
        .collect()
}

/// Runs every cell with at most `jobs` worker threads (0: rayon's default).
///
/// Cells that fail are recorded with their error and left out of the
/// aggregates; the caller decides how to surface them.
pub fn run_experiment(config: &ExperimentConfig, jobs: usize) -> Result<AggregateReport> {
    config.validate()?;
    let data = config.load_dataset()?;
    let eval_opts = config.eval_options()?;
    let config_hash = config.hash()?;
    let splits: Vec<(Dataset, Dataset)> = (0..config.repeats)
        .map(|r| {
            let spec = SplitSpec {
                train_fraction: config.split.train_fraction,
                seed: config.split.seed,
                repeat_index: r as u64,
            };
            let (train, test) = split(&data, &spec)?;
            let (train, mut others, _) = standardize(&train, &[test])?;
            Ok((train, others.remove(0)))
        })
        .collect::<Result<_>>()?;

    let mut cells = Vec::new();
    let mut candidates = Vec::new();
    for (mi, m) in config.methods.iter().enumerate() {
        let cands = m.candidates()?;
        for ci in 0..cands.len() {
            for r in 0..config.repeats {
                cells.push((mi, ci, r));
            }
        }
        candidates.push(cands);
    }

    let run_cell = |&(mi, ci, r): &(usize, usize, usize)| -> CellRecord {
        let method = &config.methods[mi];
        let mut cfg = candidates[mi][ci].clone();
        cfg.seed = cfg.seed.wrapping_add(r as u64);
        let (train, test) = &splits[r];
        let outcome = fit_method(config, method, &cfg, train).and_then(|s| evaluate(&s, test, &eval_opts));
        let label = method.display_label();
        match outcome {
            Ok(report) => CellRecord {
                label,
                candidate: ci,
                repeat: r,
                train_seed: cfg.seed,
                error: None,
                report: Some(report),
            },
            Err(e) => {
                log::warn!("cell {label} candidate {ci} repeat {r} failed: {e}");
                CellRecord {
                    label,
                    candidate: ci,
                    repeat: r,
                    train_seed: cfg.seed,
                    error: Some(format!("{}: {e}", e.kind())),
                    report: None,
                }
            }
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::invalid(e.to_string()))?;
    let rows: Vec<CellRecord> = pool.install(|| cells.par_iter().map(run_cell).collect());

    let methods = config
        .methods
        .iter()
        .zip(&candidates)
        .map(|(m, cands)| {
            let label = m.display_label();
            let summaries: Vec<CandidateSummary> = cands
                .iter()
                .enumerate()
                .map(|(ci, train)| {
                    let mine: Vec<&CellRecord> = rows.iter().filter(|r| r.label == label && r.candidate == ci).collect();
                    let reports: Vec<&EvalReport> = mine.iter().filter_map(|r| r.report.as_ref()).collect();
                    CandidateSummary {
                        index: ci,
                        train: train.clone(),
                        metrics: summarize(&reports),
                        failed: mine.len() - reports.len(),
                    }
                })
                .collect();
            let selected = select_candidate(&summaries);
            MethodSummary {
                label,
                method: m.method,
                selected,
                metrics: summaries[selected].metrics.clone(),
                failed: summaries.iter().map(|c| c.failed).sum(),
                candidates: summaries,
            }
        })
        .collect();
    Ok(AggregateReport {
        name: config.name.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash,
        split_seed: config.split.seed,
        repeats: config.repeats,
        methods,
        rows,
    })
}

/// Highest mean prob_fwh (mean accuracy for unpartitioned methods); the
/// earliest candidate wins ties.
fn select_candidate(cands: &[CandidateSummary]) -> usize {
    let score = |c: &CandidateSummary| {
        c.metrics
            .get("prob_fwh")
            .or_else(|| c.metrics.get("accuracy"))
            .map_or(f64::NEG_INFINITY, |s| s.mean)
    };
    let mut best = 0;
    for (i, c) in cands.iter().enumerate().skip(1) {
        if score(c) > score(&cands[best]) {
            best = i;
        }
    }
    best
}

const PERCENT_METRICS: [&str; 6] = [
    "prob_fwh",
    "accuracy",
    "max_gain",
    "min_envy",
    "delta_disparity",
    "pooled_accuracy",
];

/// `mean% ± std%` with two decimals.
pub fn format_percent(stat: &MetricStat) -> String {
    format!("{:.2}% ± {:.2}%", stat.mean * 100.0, stat.std * 100.0)
}

fn format_cell(metric: &str, stat: Option<&MetricStat>) -> String {
    match stat {
        None => "N/A".into(),
        Some(s) if PERCENT_METRICS.contains(&metric) => format_percent(s),
        Some(s) => format!("{:.2} ± {:.2}", s.mean, s.std),
    }
}

fn check_nonempty(report: &AggregateReport) -> Result<()> {
    if report.methods.iter().all(|m| m.metrics.is_empty()) {
        return Err(Error::invalid("aggregate report has no evaluated cells"));
    }
    Ok(())
}

/// Markdown table, one row per method.
pub fn render_markdown(report: &AggregateReport, metrics: &[&str]) -> Result<String> {
    check_nonempty(report)?;
    let mut out = String::new();
    writeln!(out, "| method | {} |", metrics.join(" | ")).unwrap();
    writeln!(out, "|---|{}", "---|".repeat(metrics.len())).unwrap();
    for m in &report.methods {
        let cells: Vec<String> = metrics.iter().map(|k| format_cell(k, m.metrics.get(*k))).collect();
        writeln!(out, "| {} | {} |", m.label, cells.join(" | ")).unwrap();
    }
    Ok(out)
}

/// CSV with `<metric>_mean` and `<metric>_std` columns, plain numbers.
pub fn render_csv(report: &AggregateReport, metrics: &[&str]) -> Result<String> {
    check_nonempty(report)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["method".to_string()];
    for m in metrics {
        header.push(format!("{m}_mean"));
        header.push(format!("{m}_std"));
    }
    w.write_record(&header)?;
    for m in &report.methods {
        let mut rec = vec![m.label.clone()];
        for k in metrics {
            match m.metrics.get(*k) {
                Some(s) => {
                    rec.push(format!("{}", s.mean));
                    rec.push(format!("{}", s.std));
                }
                None => rec.extend([String::new(), String::new()]),
            }
        }
        w.write_record(&rec)?;
    }
    String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?)
        .map_err(|e| Error::invalid(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ExperimentConfig {
        ExperimentConfig::from_toml(
            r#"
            repeats = 2
            [dataset]
            kind = "synthetic"
            n = 400
            [[methods]]
            method = "dafh"
            train = { batch_size = 128, epochs = 1 }
            [[methods]]
            method = "trivial"
            attribute = "s1"
            train = { batch_size = 128, epochs = 1 }
            [[methods]]
            method = "pooled"
            train = { batch_size = 128, epochs = 1 }
            "#,
        )
        .unwrap()
    }

    #[test]
    fn percent_format() {
        let s = MetricStat {
            mean: 0.9771,
            std: 0.0034,
            count: 5,
        };
        assert_eq!(format_percent(&s), "97.71% ± 0.34%");
    }

    #[test]
    fn single_value_has_zero_std() {
        let s = MetricStat::of(&[0.42]).unwrap();
        assert_eq!((s.mean, s.std, s.count), (0.42, 0.0, 1));
        assert!(MetricStat::of(&[]).is_none());
    }

    #[test]
    fn grid_expands_cartesian() {
        let mut m = MethodConfig::new(MethodKind::Dafh);
        m.grid.insert("lambda".into(), vec![1.0.into(), 10.0.into()]);
        m.grid.insert("batch_size".into(), vec![256.into(), 1024.into(), 64.into()]);
        let c = m.candidates().unwrap();
        assert_eq!(c.len(), 6);
        assert_eq!((c[0].batch_size, c[0].lambda), (256, 1.0));
        assert_eq!((c[1].batch_size, c[1].lambda), (256, 10.0));
        m.grid.insert("nonsense".into(), vec![1.into()]);
        assert!(m.candidates().is_err());
    }

    #[test]
    fn config_errors() {
        assert!(ExperimentConfig::from_toml("methods = []\n[dataset]\nkind = \"synthetic\"").is_err());
        let bad = "repeats = 0\n[dataset]\nkind = \"synthetic\"\n[[methods]]\nmethod = \"pooled\"";
        assert!(ExperimentConfig::from_toml(bad).is_err());
        let dup = "[dataset]\nkind = \"synthetic\"\n[[methods]]\nmethod = \"pooled\"\n[[methods]]\nmethod = \"pooled\"";
        assert!(ExperimentConfig::from_toml(dup).is_err());
    }

    #[test]
    fn run_shapes_and_determinism() {
        let cfg = small_config();
        let a = run_experiment(&cfg, 2).unwrap();
        assert_eq!(a.methods.len(), 3);
        assert_eq!(a.rows.len(), 6);
        assert_eq!(a.failed_cells(), 0);
        assert!(a.method("pooled").unwrap().metrics.get("prob_fwh").is_none());
        assert_eq!(a.method("trivial(s1)").unwrap().metrics["accuracy"].count, 2);
        let b = run_experiment(&cfg, 1).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        let md = render_markdown(&a, &["prob_fwh", "accuracy"]).unwrap();
        assert_eq!(md.lines().count(), 5);
        assert!(md.contains("| pooled | N/A |"));
    }

    #[test]
    fn empty_report_is_rejected() {
        let r = AggregateReport {
            name: "x".into(),
            version: "0".into(),
            config_hash: String::new(),
            split_seed: 0,
            repeats: 1,
            methods: vec![],
            rows: vec![],
        };
        assert!(render_markdown(&r, &METRICS).is_err());
        assert!(render_csv(&r, &METRICS).is_err());
    }

    #[test]
    fn bare_attribute_picks_dataset_rule() {
        let cfg = ExperimentConfig::from_toml(
            "[dataset]\nkind = \"csv\"\npath = \"x.csv\"\nlabel = \"y\"\nsensitive = [\"age\"]\nbinarize = [\"age<25\"]\n[[methods]]\nmethod = \"pooled\"",
        )
        .unwrap();
        assert_eq!(cfg.attribute("age").unwrap(), AttributeSpec::below("age", 25.0));
        assert_eq!(cfg.attribute("age<40").unwrap(), AttributeSpec::below("age", 40.0));
    }
}
