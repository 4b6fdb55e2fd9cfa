//! Command-line front end behind the `dafh` binary.
//!
//! Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure,
//! 4 experiment finished with failed cells. Failures print one JSON line
//! on stderr: `{"error":"<kind>","exit_code":N,"message":"..."}`.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::baselines::{
    intersection_partition, kmeans_partition, manual_arrest_partition, pooled_system, train_on_partition,
    trivial_partition, AttributeSpec, ManualArrestSpec, DEFAULT_CELL_CAP,
};
use crate::data::{apply_standardization, gen_synthetic, load_csv, standardize, write_csv, Dataset, Schema};
use crate::error::{Error, Result};
use crate::experiment::{
    render_csv, render_markdown, run_experiment, AggregateReport, ExperimentConfig, METRICS,
    OUTPUT_DIR_ENV,
};
use crate::metrics::{evaluate, EvalOptions};
use crate::models::{load_system, save_system, ModelBundle};
use crate::training::{train_dafh, SgdConfig, TrainConfig};

#[derive(Debug, Parser)]
#[command(name = "dafh", version, about = "Fairness without harm via learned group partitions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the two-attribute synthetic dataset as CSV.
    GenSynth(GenSynthArgs),
    /// Train a group classifier with decoupled classifiers.
    Train(TrainArgs),
    /// Fit a baseline partition and its per-group classifiers.
    Baseline(BaselineArgs),
    /// Evaluate a model bundle on a dataset.
    Eval(EvalArgs),
    /// Run a multi-seed experiment from a TOML config.
    Experiment(ExperimentArgs),
    /// Render an aggregate report as a table.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GenSynthArgs {
    #[arg(long, default_value_t = 20000)]
    pub n: usize,
    #[arg(long, default_value_t = 0.4)]
    pub delta: f64,
    #[arg(long, default_value_t = 0.3)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV [default: <output dir>/synthetic.csv]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "y")]
    pub label: String,
    /// Comma-separated sensitive columns; kept out of the model features.
    #[arg(long, value_delimiter = ',')]
    pub sensitive: Vec<String>,
    /// Keep numeric features in raw units instead of z-scoring them.
    #[arg(long)]
    pub no_standardize: bool,
}

impl DataArgs {
    fn sensitive_or_synthetic(&self) -> Vec<String> {
        if self.sensitive.is_empty() && self.label == "y" {
            if let Ok(header) = read_header(&self.data) {
                if header.iter().any(|h| h == "s1") && header.iter().any(|h| h == "s2") {
                    return vec!["s1".into(), "s2".into()];
                }
            }
        }
        self.sensitive.clone()
    }

    /// Loads and (unless disabled) standardizes on this data's own statistics.
    fn load(&self) -> Result<(Dataset, Schema)> {
        let ds = load_csv(&self.data, &self.label, &self.sensitive_or_synthetic())?;
        if self.no_standardize {
            let schema = ds.schema().clone();
            return Ok((ds, schema));
        }
        let (ds, _, schema) = standardize(&ds, &[])?;
        Ok((ds, schema))
    }
}

fn read_header(path: &Path) -> Result<Vec<String>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    Ok(rdr.headers()?.iter().map(str::to_string).collect())
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    #[arg(long, default_value_t = 1024)]
    pub batch: usize,
    #[arg(long, default_value_t = 3)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr_group: f64,
    #[arg(long, default_value_t = 1e-2)]
    pub lr_dec: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 10.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.0)]
    pub convergence_tol: f64,
    /// Record train metrics every this many steps as well as at epoch ends.
    #[arg(long, default_value_t = 0)]
    pub eval_every: usize,
    /// Model bundle path [default: <output dir>/model.json]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Trace CSV path [default: bundle path with a .trace.csv suffix]
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BaselineMethod {
    Pooled,
    Trivial,
    Cluster,
    LrAll,
    Manual,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum)]
    pub method: BaselineMethod,
    /// `trivial`: attribute to split on (`name`, `name<threshold` or `name=value`).
    #[arg(long)]
    pub attribute: Option<String>,
    /// `lr-all`: comma-separated attributes.
    #[arg(long, value_delimiter = ',')]
    pub attributes: Vec<String>,
    /// `cluster`: number of clusters.
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    /// Binarizes a bare `age` attribute at this threshold.
    #[arg(long)]
    pub age_threshold: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_CELL_CAP)]
    pub cell_cap: usize,
    #[arg(long, default_value_t = 1024)]
    pub batch: usize,
    #[arg(long, default_value_t = 3)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-2)]
    pub lr_dec: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Model bundle path [default: <output dir>/<method>.json]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvalFormat {
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Label column [default: the one the model was trained with]
    #[arg(long)]
    pub label: Option<String>,
    /// Sensitive columns [default: the ones the model was trained with]
    #[arg(long, value_delimiter = ',')]
    pub sensitive: Vec<String>,
    /// Sensitive attribute defining the groups of the disparity metric.
    #[arg(long)]
    pub disparity_by: Option<String>,
    /// Comma-separated attributes for the per-group composition table.
    #[arg(long, value_delimiter = ',')]
    pub composition_by: Vec<String>,
    /// Output file [default: stdout]
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = EvalFormat::Json)]
    pub format: EvalFormat,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    pub config: PathBuf,
    /// Worker threads (0: one per core).
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    /// Output directory [default: config's output_dir, else $DAFH_OUTPUT_DIR, else dafh-out]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Markdown,
    Csv,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// An aggregate.json written by `experiment`.
    pub aggregate: PathBuf,
    #[arg(long, value_enum, default_value_t = ReportFormat::Markdown)]
    pub format: ReportFormat,
    /// Comma-separated metrics [default: all]
    #[arg(long, value_delimiter = ',')]
    pub metrics: Vec<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn default_output_dir() -> PathBuf {
    std::env::var_os(OUTPUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("dafh-out"))
}

fn output_path(explicit: Option<PathBuf>, file: &str) -> Result<PathBuf> {
    let path = explicit.unwrap_or_else(|| default_output_dir().join(file));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(path)
}

/// Runs one command, writing normal output to `out`. Returns the exit code.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<i32> {
    match cli.command {
        Command::GenSynth(a) => gen_synth(a, out),
        Command::Train(a) => train(a, out),
        Command::Baseline(a) => baseline(a, out),
        Command::Eval(a) => eval(a, out),
        Command::Experiment(a) => experiment(a, out),
        Command::Report(a) => report(a, out),
    }
}

fn gen_synth(a: GenSynthArgs, out: &mut dyn Write) -> Result<i32> {
    if a.n == 0 {
        return Err(Error::invalid("--n must be at least 1"));
    }
    let ds = gen_synthetic(a.n, a.delta, a.sigma, a.seed)?;
    let path = output_path(a.out, "synthetic.csv")?;
    write_csv(&ds, fs::File::create(&path)?)?;
    writeln!(out, "wrote {} rows to {}", ds.len(), path.display())?;
    Ok(0)
}

fn train(a: TrainArgs, out: &mut dyn Write) -> Result<i32> {
    if a.k < 2 {
        return Err(Error::invalid("--k must be at least 2"));
    }
    let config = TrainConfig {
        k: a.k,
        batch_size: a.batch,
        epochs: a.epochs,
        lr_group: a.lr_group,
        lr_decoupled: a.lr_dec,
        momentum_decoupled: a.momentum,
        lambda: a.lambda,
        seed: a.seed,
        tau: a.tau,
        convergence_tol: a.convergence_tol,
        eval_every_steps: a.eval_every,
    };
    config.validate()?;
    let (ds, schema) = a.data.load()?;
    let run = train_dafh(&ds, &config, None)?;
    let bundle_path = output_path(a.out, "model.json")?;
    let trace_path = match a.trace {
        Some(p) => p,
        None => bundle_path.with_extension("trace.csv"),
    };
    save_system(&ModelBundle::new(run.system, &schema, "dafh")?, &bundle_path)?;
    run.trace.write_csv(fs::File::create(&trace_path)?)?;
    writeln!(out, "model: {}", bundle_path.display())?;
    writeln!(out, "trace: {}", trace_path.display())?;
    if let Some(last) = run.trace.epoch_ends().last() {
        writeln!(
            out,
            "train objective {:.6}, accuracy {:.4}, prob_fwh {:.4}",
            last.train_objective, last.train.accuracy, last.train.prob_fwh
        )?;
    }
    Ok(0)
}

fn baseline(a: BaselineArgs, out: &mut dyn Write) -> Result<i32> {
    let (ds, schema) = a.data.load()?;
    let sgd = SgdConfig {
        lr: a.lr_dec,
        epochs: a.epochs,
        batch_size: a.batch,
        momentum: a.momentum,
        l2: 0.0,
        seed: a.seed,
    };
    let attr = |text: &str| -> Result<AttributeSpec> {
        let spec: AttributeSpec = text.parse()?;
        Ok(match (spec.binarize.is_none() && spec.name == "age", a.age_threshold) {
            (true, Some(t)) => AttributeSpec::below("age", t),
            _ => spec,
        })
    };
    let (system, name) = match a.method {
        BaselineMethod::Pooled => (pooled_system(&ds, &sgd)?, "pooled"),
        BaselineMethod::Trivial => {
            let text = a
                .attribute
                .as_deref()
                .ok_or_else(|| Error::invalid("--method trivial needs --attribute"))?;
            (train_on_partition(&ds, &trivial_partition(&ds, &attr(text)?)?, &sgd)?, "trivial")
        }
        BaselineMethod::LrAll => {
            if a.attributes.is_empty() {
                return Err(Error::invalid("--method lr-all needs --attributes"));
            }
            let attrs = a.attributes.iter().map(|t| attr(t)).collect::<Result<Vec<_>>>()?;
            let p = intersection_partition(&ds, &attrs, a.cell_cap)?;
            (train_on_partition(&ds, &p, &sgd)?, "lr-all")
        }
        BaselineMethod::Cluster => {
            let (p, _) = kmeans_partition(&ds, a.k, a.seed, 100, 1e-9)?;
            (train_on_partition(&ds, &p, &sgd)?, "cluster")
        }
        BaselineMethod::Manual => {
            let p = manual_arrest_partition(&ds, &ManualArrestSpec::default(), a.seed)?;
            (train_on_partition(&ds, &p, &sgd)?, "manual")
        }
    };
    let path = output_path(a.out, &format!("{name}.json"))?;
    let k = system.k();
    save_system(&ModelBundle::new(system, &schema, name)?, &path)?;
    writeln!(out, "model: {} (K = {k})", path.display())?;
    Ok(0)
}

fn eval(a: EvalArgs, out: &mut dyn Write) -> Result<i32> {
    let bundle = load_system(&a.model)?;
    let label = a.label.unwrap_or_else(|| bundle.schema.label_name.clone());
    let sensitive = if a.sensitive.is_empty() {
        bundle.schema.sensitive_names.clone()
    } else {
        a.sensitive
    };
    let raw = load_csv(&a.data, &label, &sensitive)?;
    bundle.check_schema(raw.schema())?;
    let ds = apply_standardization(&raw, &bundle.schema)?;
    let opts = EvalOptions {
        disparity_by: a.disparity_by.as_deref().map(str::parse).transpose()?,
        composition_by: a.composition_by.iter().map(|s| s.parse()).collect::<Result<_>>()?,
    };
    let report = evaluate(&bundle.system, &ds, &opts)?;
    let text = match a.format {
        EvalFormat::Json => {
            let mut s = serde_json::to_string_pretty(&report.to_flat_map()).map_err(|e| Error::invalid(e.to_string()))?;
            s.push('\n');
            s
        }
        EvalFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(crate::metrics::EvalReport::CSV_HEADER)?;
            w.write_record(report.csv_values())?;
            String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?)
                .map_err(|e| Error::invalid(e.to_string()))?
        }
    };
    match a.report {
        Some(path) => {
            let path = output_path(Some(path), "")?;
            fs::write(&path, text)?;
            writeln!(out, "report: {}", path.display())?;
        }
        None => out.write_all(text.as_bytes())?,
    }
    Ok(0)
}

fn experiment(a: ExperimentArgs, out: &mut dyn Write) -> Result<i32> {
    let config = ExperimentConfig::from_file(&a.config)?;
    let report = run_experiment(&config, a.jobs)?;
    let dir = a.out.unwrap_or_else(|| config.resolved_output_dir());
    fs::create_dir_all(&dir)?;
    report.write_to(&dir)?;
    let failed = report.failed_cells();
    if failed < report.rows.len() {
        out.write_all(render_markdown(&report, &["prob_fwh", "accuracy", "violations"])?.as_bytes())?;
    }
    writeln!(out, "results: {}", dir.join("aggregate.json").display())?;
    if failed > 0 {
        log::warn!("{failed} of {} cells failed", report.rows.len());
        return Ok(4);
    }
    Ok(0)
}

fn report(a: ReportArgs, out: &mut dyn Write) -> Result<i32> {
    let agg = AggregateReport::load(&a.aggregate)?;
    let metrics: Vec<&str> = if a.metrics.is_empty() {
        METRICS.to_vec()
    } else {
        for m in &a.metrics {
            if !METRICS.contains(&m.as_str()) {
                return Err(Error::invalid(format!("unknown metric {m:?}")));
            }
        }
        a.metrics.iter().map(String::as_str).collect()
    };
    let text = match a.format {
        ReportFormat::Markdown => render_markdown(&agg, &metrics)?,
        ReportFormat::Csv => render_csv(&agg, &metrics)?,
    };
    match a.out {
        Some(path) => fs::write(output_path(Some(path), "")?, text)?,
        None => out.write_all(text.as_bytes())?,
    }
    Ok(0)
}

/// Single-line JSON error record.
pub fn error_line(kind: &str, code: i32, message: &str) -> String {
    serde_json::json!({ "error": kind, "exit_code": code, "message": message }).to_string()
}

/// Parses `args`, runs the command and reports failures; returns the exit code.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = write!(out, "{e}");
            return 0;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or_default().trim_start_matches("error: ");
            let _ = writeln!(err, "{}", error_line("usage", 1, first));
            return 1;
        }
    };
    match run(cli, out) {
        Ok(code) => code,
        Err(e) => {
            let code = e.exit_code();
            let _ = writeln!(err, "{}", error_line(e.kind(), code, &e.to_string()));
            code
        }
    }
}
