//! Joint stochastic gradient ascent for the group classifier and the
//! decoupled classifiers, and logistic-loss descent for the pooled model.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics;
use crate::models::{init_system, sigmoid, GroupAssigner, LogisticModel, TrainedSystem};
use crate::objective::{self, surrogate_value_and_grad};
use crate::rng::Stream;

const SHUFFLE_TAG: u64 = 0x5348_5546;
pub(crate) const POOLED_TAG: u64 = 0x504f_4f4c;

/// Hyperparameters of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub k: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr_group: f64,
    pub lr_decoupled: f64,
    pub momentum_decoupled: f64,
    pub lambda: f64,
    pub seed: u64,
    /// Temperature of the differentiable loss.
    pub tau: f64,
    /// Stop once the epoch-to-epoch change of the full-train surrogate falls
    /// below this; 0 disables early stopping.
    pub convergence_tol: f64,
    /// Also record metrics every this many steps (0: epoch ends only).
    pub eval_every_steps: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            k: 2,
            batch_size: 1024,
            epochs: 3,
            lr_group: 1e-3,
            lr_decoupled: 1e-2,
            momentum_decoupled: 0.9,
            lambda: 10.0,
            seed: 0,
            tau: 1.0,
            convergence_tol: 0.0,
            eval_every_steps: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::invalid(m.to_string()));
        if self.k < 2 {
            return bad("K must be at least 2");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if !(self.lr_group >= 0.0 && self.lr_decoupled >= 0.0) {
            return bad("learning rates must be non-negative");
        }
        if !(0.0..1.0).contains(&self.momentum_decoupled) {
            return bad("momentum must lie in [0, 1)");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be non-negative");
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad("tau must be positive");
        }
        if !(self.convergence_tol >= 0.0) {
            return bad("convergence_tol must be non-negative");
        }
        Ok(())
    }

    /// Optimizer settings shared by the pooled classifier and baseline fits.
    pub fn sgd(&self) -> SgdConfig {
        SgdConfig {
            lr: self.lr_decoupled,
            epochs: self.epochs,
            batch_size: self.batch_size,
            momentum: self.momentum_decoupled,
            l2: 0.0,
            seed: self.seed,
        }
    }
}

/// Mini-batch logistic-loss descent settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub momentum: f64,
    /// Optional ridge strength; 0 gives plain empirical risk minimization.
    pub l2: f64,
    pub seed: u64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        TrainConfig::default().sgd()
    }
}

fn logistic_loss(h: &LogisticModel, x: &[f64], y: f64) -> f64 {
    // ln(1 + exp(-m)) without overflow
    let m = y * h.logit(x);
    if m > 0.0 {
        (-m).exp().ln_1p()
    } else {
        -m + m.exp().ln_1p()
    }
}

/// Mean logistic loss of `h` over the rows `rows` of `data`.
pub fn mean_logistic_loss(h: &LogisticModel, data: &Dataset, rows: &[usize]) -> f64 {
    rows.iter()
        .map(|&i| logistic_loss(h, data.row(i), data.label(i)))
        .sum::<f64>()
        / rows.len() as f64
}

/// Fits a zero-initialized logistic model on `rows` of `data`; returns the
/// model and the mean training loss after each epoch.
pub fn fit_logistic(data: &Dataset, rows: &[usize], cfg: &SgdConfig, stream_tag: u64) -> Result<(LogisticModel, Vec<f64>)> {
    if rows.is_empty() {
        return Err(Error::invalid("cannot fit a classifier on zero rows"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::invalid("batch_size must be positive"));
    }
    let d = data.dim();
    let mut h = LogisticModel::zeros(d);
    let mut vel = LogisticModel::zeros(d);
    let mut grad = LogisticModel::zeros(d);
    let mut order = rows.to_vec();
    let mut rng = Stream::derived(cfg.seed, stream_tag);
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        for chunk in order.chunks(cfg.batch_size) {
            grad.weights.iter_mut().for_each(|g| *g = 0.0);
            grad.bias = 0.0;
            for &i in chunk {
                let x = data.row(i);
                let y = data.label(i);
                // d/dz ln(1 + exp(-y z)) = -y * sigmoid(-y z)
                let coef = -y * sigmoid(-y * h.logit(x));
                for (g, v) in grad.weights.iter_mut().zip(x) {
                    *g += coef * v;
                }
                grad.bias += coef;
            }
            let m = chunk.len() as f64;
            for ((w, v), g) in h.weights.iter_mut().zip(&mut vel.weights).zip(&grad.weights) {
                *v = cfg.momentum * *v + g / m + cfg.l2 * *w;
                *w -= cfg.lr * *v;
            }
            vel.bias = cfg.momentum * vel.bias + grad.bias / m;
            h.bias -= cfg.lr * vel.bias;
        }
        let loss = mean_logistic_loss(&h, data, rows);
        if !loss.is_finite() || !h.is_finite() {
            return Err(Error::numeric("logistic", format!("diverged in epoch {epoch}")));
        }
        history.push(loss);
    }
    Ok((h, history))
}

/// Empirical-risk classifier over the whole training set.
pub fn train_pooled(train: &Dataset, cfg: &SgdConfig) -> Result<LogisticModel> {
    let rows: Vec<usize> = (0..train.len()).collect();
    Ok(fit_logistic(train, &rows, cfg, POOLED_TAG)?.0)
}

/// Metrics recorded at evaluation points during training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochSummary {
    pub accuracy: f64,
    pub prob_fwh: f64,
    pub group_sizes: Vec<usize>,
    /// Set when some group is empty on this split.
    pub empty_groups: Vec<usize>,
}

/// Assigned accuracy and probability of fairness without harm on `data`.
pub fn epoch_metrics(system: &TrainedSystem, data: &Dataset) -> Result<EpochSummary> {
    let table = objective::build_loss_table(system, data)?;
    Ok(EpochSummary {
        accuracy: objective::assigned_accuracy(&table),
        prob_fwh: metrics::prob_fwh(&table),
        group_sizes: table.group_sizes().to_vec(),
        empty_groups: table.empty_groups(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// 1-based count of parameter updates so far.
    pub step: usize,
    pub epoch: usize,
    /// Batch surrogate before the update.
    pub objective: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub step: usize,
    pub epoch: usize,
    pub epoch_end: bool,
    /// Surrogate over the full training set.
    pub train_objective: f64,
    pub train: EpochSummary,
    pub test: Option<EpochSummary>,
}

/// Per-step and per-evaluation history of a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub steps: Vec<StepRecord>,
    pub evals: Vec<EvalRecord>,
}

impl TrainTrace {
    pub fn epoch_ends(&self) -> impl Iterator<Item = &EvalRecord> {
        self.evals.iter().filter(|e| e.epoch_end)
    }

    /// `step,objective,gamma,train_acc,train_pfwh,test_acc,test_pfwh`; metric
    /// cells are empty on steps without an evaluation.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["step", "objective", "gamma", "train_acc", "train_pfwh", "test_acc", "test_pfwh"])?;
        let fmt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
        for s in &self.steps {
            let eval = self.evals.iter().rev().find(|e| e.step == s.step);
            let test = eval.and_then(|e| e.test.as_ref());
            w.write_record([
                s.step.to_string(),
                format!("{}", s.objective),
                format!("{}", s.gamma),
                fmt(eval.map(|e| e.train.accuracy)),
                fmt(eval.map(|e| e.train.prob_fwh)),
                fmt(test.map(|t| t.accuracy)),
                fmt(test.map(|t| t.prob_fwh)),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Result of a joint training run.
#[derive(Debug, Clone)]
pub struct TrainRun {
    /// Parameters after the last update.
    pub system: TrainedSystem,
    pub trace: TrainTrace,
    /// Snapshot with the best monitor-set accuracy among evaluation points.
    pub best_on_monitor: Option<TrainedSystem>,
}

fn at_step(step: usize, err: Error) -> Error {
    match err {
        Error::NumericFailure { block, detail } => Error::NumericFailure {
            block,
            detail: format!("step {step}: {detail}"),
        },
        other => other,
    }
}

/// Trains the pooled classifier, then runs mini-batch gradient ascent on the
/// relaxed objective. Each step takes one joint gradient at the current
/// parameters, updates the group network with plain ascent and the
/// decoupled classifiers with heavy-ball momentum.
pub fn train_dafh(train: &Dataset, config: &TrainConfig, monitor: Option<&Dataset>) -> Result<TrainRun> {
    config.validate()?;
    let n = train.len();
    let mut system = init_system(train.dim(), config.k, config.seed)?;
    system.config = config.clone();
    system.pooled = train_pooled(train, &config.sgd())?;

    let k = config.k;
    let d = train.dim();
    let mut velocity = vec![LogisticModel::zeros(d); k];
    let mut rng = Stream::derived(config.seed, SHUFFLE_TAG);
    let mut trace = TrainTrace::default();
    let mut best: Option<(f64, TrainedSystem)> = None;
    let mut step = 0usize;
    let mut prev_objective: Option<f64> = None;

    let evaluate = |system: &TrainedSystem, step: usize, epoch: usize, epoch_end: bool| -> Result<EvalRecord> {
        let full = objective::soft_tables(system, train, config.tau)?;
        let (train_objective, _) = objective::surrogate_from_tables(&full, config.lambda);
        Ok(EvalRecord {
            step,
            epoch,
            epoch_end,
            train_objective,
            train: epoch_metrics(system, train)?,
            test: monitor.map(|m| epoch_metrics(system, m)).transpose()?,
        })
    };

    for epoch in 0..config.epochs {
        let order = rng.permutation(n);
        for chunk in order.chunks(config.batch_size) {
            let batch = train.subset(chunk)?;
            let grad = surrogate_value_and_grad(&system, &batch, config.lambda, config.tau)
                .map_err(|e| at_step(step + 1, e))?;
            if let GroupAssigner::Learned(mlp) = &mut system.group {
                let g = &grad.group;
                for (p, q) in [
                    (&mut mlp.w1, &g.w1),
                    (&mut mlp.b1, &g.b1),
                    (&mut mlp.w2, &g.w2),
                    (&mut mlp.b2, &g.b2),
                ] {
                    for (a, b) in p.iter_mut().zip(q) {
                        *a += config.lr_group * b;
                    }
                }
            }
            for ((h, v), g) in system.decoupled.iter_mut().zip(&mut velocity).zip(&grad.decoupled) {
                for ((w, vw), gw) in h.weights.iter_mut().zip(&mut v.weights).zip(&g.weights) {
                    *vw = config.momentum_decoupled * *vw + gw;
                    *w += config.lr_decoupled * *vw;
                }
                v.bias = config.momentum_decoupled * v.bias + g.bias;
                h.bias += config.lr_decoupled * v.bias;
            }
            step += 1;
            trace.steps.push(StepRecord {
                step,
                epoch,
                objective: grad.value,
                gamma: grad.gamma,
            });
            if config.eval_every_steps > 0 && step % config.eval_every_steps == 0 {
                let rec = evaluate(&system, step, epoch, false)?;
                track_best(&mut best, &rec, &system);
                trace.evals.push(rec);
            }
        }
        let rec = evaluate(&system, step, epoch, true)?;
        track_best(&mut best, &rec, &system);
        let obj = rec.train_objective;
        trace.evals.push(rec);
        if config.convergence_tol > 0.0 {
            if let Some(prev) = prev_objective {
                if (obj - prev).abs() < config.convergence_tol {
                    break;
                }
            }
        }
        prev_objective = Some(obj);
    }
    Ok(TrainRun {
        system,
        trace,
        best_on_monitor: best.map(|(_, s)| s),
    })
}

fn track_best(best: &mut Option<(f64, TrainedSystem)>, rec: &EvalRecord, system: &TrainedSystem) {
    if let Some(test) = &rec.test {
        if best.as_ref().map_or(true, |(acc, _)| test.accuracy > *acc) {
            *best = Some((test.accuracy, system.clone()));
        }
    }
}
