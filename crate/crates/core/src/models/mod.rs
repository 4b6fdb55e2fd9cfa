//! Group classifier, logistic classifiers and the trained-system bundle.

mod bundle;

use serde::{Deserialize, Serialize};

use crate::baselines::Assigner;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::training::TrainConfig;

pub use bundle::{load_system, save_system, ModelBundle, FORMAT_VERSION};

/// Width of the group classifier's hidden layer.
pub const HIDDEN_UNITS: usize = 100;

/// Numerically stable logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Softmax with max-subtraction, written into `out`.
pub fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &z) in out.iter_mut().zip(logits) {
        *o = (z - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

/// Binary logistic-regression classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LogisticModel {
    pub fn zeros(d: usize) -> Self {
        Self {
            weights: vec![0.0; d],
            bias: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub(crate) fn logit(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }

    /// Probability of the positive class, unchecked.
    pub(crate) fn prob(&self, x: &[f64]) -> f64 {
        sigmoid(self.logit(x))
    }

    /// Probability of label +1.
    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        let p = self.prob(x);
        if !p.is_finite() {
            return Err(Error::numeric("logistic", "non-finite output"));
        }
        Ok(p)
    }

    /// Hard label: +1 iff the positive-class probability is at least 1/2.
    pub fn predict(&self, x: &[f64]) -> f64 {
        if self.prob(x) >= 0.5 {
            1.0
        } else {
            -1.0
        }
    }

    pub fn is_finite(&self) -> bool {
        self.bias.is_finite() && self.weights.iter().all(|w| w.is_finite())
    }
}

pub fn logistic_forward(model: &LogisticModel, x: &[f64]) -> Result<f64> {
    model.forward(x)
}

/// One-hidden-layer ReLU network with a softmax output over `k` groups.
///
/// Weight matrices are row-major: `w1` is `hidden x d`, `w2` is `k x hidden`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMlp {
    pub d: usize,
    pub k: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

/// Intermediate activations kept for backpropagation.
#[derive(Debug, Clone)]
pub(crate) struct MlpCache {
    pub pre: Vec<f64>,
    pub hidden: Vec<f64>,
    pub probs: Vec<f64>,
}

impl GroupMlp {
    /// Weights uniform on `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, zero biases.
    pub fn init(d: usize, k: usize, hidden: usize, rng: &mut Stream) -> Self {
        let a1 = 1.0 / (d as f64).sqrt();
        let a2 = 1.0 / (hidden as f64).sqrt();
        let w1 = (0..hidden * d).map(|_| rng.uniform_in(-a1, a1)).collect();
        let w2 = (0..k * hidden).map(|_| rng.uniform_in(-a2, a2)).collect();
        Self {
            d,
            k,
            w1,
            b1: vec![0.0; hidden],
            w2,
            b2: vec![0.0; k],
        }
    }

    pub fn hidden(&self) -> usize {
        self.b1.len()
    }

    pub(crate) fn forward_cached(&self, x: &[f64]) -> MlpCache {
        let h = self.hidden();
        let mut pre = vec![0.0; h];
        for (u, p) in pre.iter_mut().enumerate() {
            let row = &self.w1[u * self.d..(u + 1) * self.d];
            *p = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.b1[u];
        }
        let hidden: Vec<f64> = pre.iter().map(|&z| z.max(0.0)).collect();
        let mut logits = vec![0.0; self.k];
        for (c, l) in logits.iter_mut().enumerate() {
            let row = &self.w2[c * h..(c + 1) * h];
            *l = row.iter().zip(&hidden).map(|(w, v)| w * v).sum::<f64>() + self.b2[c];
        }
        let mut probs = vec![0.0; self.k];
        softmax_into(&logits, &mut probs);
        MlpCache { pre, hidden, probs }
    }

    /// Soft group assignment (a point on the simplex).
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.d, x.len())?;
        let probs = self.forward_cached(x).probs;
        if probs.iter().any(|p| !p.is_finite()) {
            return Err(Error::numeric("group", "non-finite softmax output"));
        }
        Ok(probs)
    }

    pub fn is_finite(&self) -> bool {
        [&self.w1, &self.b1, &self.w2, &self.b2]
            .iter()
            .all(|v| v.iter().all(|x| x.is_finite()))
    }
}

pub fn group_forward(model: &GroupMlp, x: &[f64]) -> Result<Vec<f64>> {
    model.forward(x)
}

/// Index of the largest entry, lowest index on ties. Groups are 0-based.
pub fn hard_assign(probs: &[f64]) -> Result<usize> {
    if probs.is_empty() {
        return Err(Error::invalid("hard_assign on empty vector"));
    }
    Ok(argmax(probs))
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in v.iter().enumerate().skip(1) {
        if p > v[best] {
            best = i;
        }
    }
    best
}

/// How samples are routed to decoupled classifiers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GroupAssigner {
    /// Learned group classifier over model features.
    Learned(GroupMlp),
    /// Fixed rule from a baseline partition.
    Rule(Assigner),
}

impl GroupAssigner {
    pub fn as_mlp(&self) -> Option<&GroupMlp> {
        match self {
            GroupAssigner::Learned(m) => Some(m),
            GroupAssigner::Rule(_) => None,
        }
    }
}

/// Group classifier, decoupled classifiers and the pooled classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedSystem {
    pub group: GroupAssigner,
    pub decoupled: Vec<LogisticModel>,
    pub pooled: LogisticModel,
    pub config: TrainConfig,
}

impl TrainedSystem {
    pub fn k(&self) -> usize {
        self.decoupled.len()
    }

    pub fn dim(&self) -> usize {
        self.pooled.dim()
    }

    pub fn mlp(&self) -> Option<&GroupMlp> {
        self.group.as_mlp()
    }

    /// Hard group of sample `i` of `data`.
    pub fn assign(&self, data: &Dataset, i: usize) -> Result<usize> {
        let x = data.row(i);
        match &self.group {
            GroupAssigner::Learned(m) => hard_assign(&m.forward(x)?),
            GroupAssigner::Rule(rule) => rule.assign(x, data.sensitive_row(i), data.sensitive()),
        }
    }

    pub fn assignments(&self, data: &Dataset) -> Result<Vec<usize>> {
        self.check_data(data)?;
        (0..data.len()).map(|i| self.assign(data, i)).collect()
    }

    pub fn check_data(&self, data: &Dataset) -> Result<()> {
        check_dim(self.dim(), data.dim())
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if self.decoupled.is_empty() {
            return Err(Error::invalid("system has no decoupled classifiers"));
        }
        if let Some(m) = self.mlp() {
            if m.k != self.k() {
                return Err(Error::invalid("group count differs from decoupled count"));
            }
            check_dim(d, m.d)?;
        }
        for h in &self.decoupled {
            check_dim(d, h.dim())?;
        }
        Ok(())
    }
}

/// Untrained system: zero logistic models and a randomly initialized group MLP.
pub fn init_system(d: usize, k: usize, seed: u64) -> Result<TrainedSystem> {
    if d == 0 {
        return Err(Error::invalid("feature dimension must be at least 1"));
    }
    if k < 2 {
        return Err(Error::invalid(format!("K must be at least 2, got {k}")));
    }
    let mut rng = Stream::derived(seed, 0x1417);
    let config = TrainConfig {
        k,
        seed,
        ..TrainConfig::default()
    };
    Ok(TrainedSystem {
        group: GroupAssigner::Learned(GroupMlp::init(d, k, HIDDEN_UNITS, &mut rng)),
        decoupled: vec![LogisticModel::zeros(d); k],
        pooled: LogisticModel::zeros(d),
        config,
    })
}
