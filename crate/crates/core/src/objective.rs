//! Fairness-without-harm objectives.
//!
//! * [`exact_objective`]: per-group risk gaps of every group's own classifier
//!   against the pooled classifier (rationality) and against every other
//!   group's classifier (envy-freeness), averaged over groups.
//! * [`lower_bound_objective`]: the same quantity with group sizes replaced
//!   by `n`, minus the pooled-loss constant. It is linear in the
//!   assignments and the losses, which makes it easy to relax.
//! * [`surrogate_value_and_grad`]: the relaxation with softmax assignments
//!   and sigmoid losses plus a balance penalty, with exact gradients.
//!
//! Every sum over samples runs sequentially in index order so results are
//! bit-reproducible.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::models::{sigmoid, GroupMlp, LogisticModel, TrainedSystem};

/// Hard 0-1 losses of the pooled and decoupled classifiers plus hard assignments.
///
/// Column 0 of `losses` is the pooled classifier; column `k + 1` is decoupled
/// classifier `k`. Groups are 0-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossTable {
    k: usize,
    losses: Vec<f64>,
    assignments: Vec<usize>,
    group_sizes: Vec<usize>,
}

impl LossTable {
    /// `rows[i]` holds `K + 1` losses in {0, 1}.
    pub fn new(rows: Vec<Vec<f64>>, assignments: Vec<usize>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("K must be positive"));
        }
        if rows.len() != assignments.len() {
            return Err(Error::DimensionMismatch {
                expected: rows.len(),
                got: assignments.len(),
            });
        }
        let mut losses = Vec::with_capacity(rows.len() * (k + 1));
        for r in &rows {
            if r.len() != k + 1 {
                return Err(Error::DimensionMismatch {
                    expected: k + 1,
                    got: r.len(),
                });
            }
            if r.iter().any(|&l| l != 0.0 && l != 1.0) {
                return Err(Error::invalid("hard losses must be 0 or 1"));
            }
            losses.extend_from_slice(r);
        }
        let mut group_sizes = vec![0; k];
        for &a in &assignments {
            if a >= k {
                return Err(Error::invalid(format!("assignment {a} outside [0, {k})")));
            }
            group_sizes[a] += 1;
        }
        Ok(Self {
            k,
            losses,
            assignments,
            group_sizes,
        })
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Loss of sample `i` under column `c` (0 = pooled, `k + 1` = decoupled `k`).
    pub fn loss(&self, i: usize, c: usize) -> f64 {
        self.losses[i * (self.k + 1) + c]
    }

    pub fn pooled_loss(&self, i: usize) -> f64 {
        self.loss(i, 0)
    }

    pub fn decoupled_loss(&self, i: usize, k: usize) -> f64 {
        self.loss(i, k + 1)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.losses[i * (self.k + 1)..(i + 1) * (self.k + 1)]
    }

    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    pub fn assignment(&self, i: usize) -> usize {
        self.assignments[i]
    }

    pub fn group_sizes(&self) -> &[usize] {
        &self.group_sizes
    }

    /// Smallest group size.
    pub fn min_group_size(&self) -> usize {
        self.group_sizes.iter().copied().min().unwrap_or(0)
    }

    pub fn empty_groups(&self) -> Vec<usize> {
        (0..self.k).filter(|&g| self.group_sizes[g] == 0).collect()
    }

    /// Sum of column-`c` losses over samples assigned to `group`.
    fn group_loss_sum(&self, group: usize, c: usize) -> f64 {
        (0..self.len())
            .filter(|&i| self.assignments[i] == group)
            .map(|i| self.loss(i, c))
            .sum()
    }

    /// Empirical risk of column `c` on `group`; `None` for an empty group.
    pub fn group_risk(&self, group: usize, c: usize) -> Option<f64> {
        let nk = self.group_sizes[group];
        (nk > 0).then(|| self.group_loss_sum(group, c) / nk as f64)
    }

    /// Debug export: `index,assignment,L0,...,LK`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["index".to_string(), "assignment".to_string()];
        header.extend((0..=self.k).map(|c| format!("L{c}")));
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec = vec![i.to_string(), self.assignments[i].to_string()];
            rec.extend(self.row(i).iter().map(|l| format!("{}", *l as u8)));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Hard losses (prediction threshold 1/2) and hard assignments of `system` on `data`.
pub fn build_loss_table(system: &TrainedSystem, data: &Dataset) -> Result<LossTable> {
    system.check_data(data)?;
    let k = system.k();
    let assignments = system.assignments(data)?;
    let rows = (0..data.len())
        .map(|i| {
            let x = data.row(i);
            let y = data.label(i);
            let miss = |h: &LogisticModel| if h.predict(x) == y { 0.0 } else { 1.0 };
            let mut row = Vec::with_capacity(k + 1);
            row.push(miss(&system.pooled));
            row.extend(system.decoupled.iter().map(miss));
            row
        })
        .collect();
    LossTable::new(rows, assignments, k)
}

/// Average over groups of the rationality gap plus the mean envy gap.
pub fn exact_objective(table: &LossTable) -> Result<f64> {
    if let Some(&g) = table.empty_groups().first() {
        return Err(Error::EmptyGroup(g));
    }
    let k = table.k();
    let kf = k as f64;
    let mut total = 0.0;
    for g in 0..k {
        let risk = |c: usize| table.group_risk(g, c).expect("nonempty");
        let own = risk(g + 1);
        let envy: f64 = (0..k).map(|j| risk(j + 1) - own).sum();
        total += (risk(0) - own) + envy / kf;
    }
    Ok(total / kf)
}

/// [`exact_objective`] with every group size replaced by `n`; defined for
/// empty groups.
pub fn exact_objective_n_denominator(table: &LossTable) -> f64 {
    let k = table.k();
    let kf = k as f64;
    let n = table.len() as f64;
    let mut total = 0.0;
    for g in 0..k {
        let risk = |c: usize| table.group_loss_sum(g, c) / n;
        let own = risk(g + 1);
        let envy: f64 = (0..k).map(|j| risk(j + 1) - own).sum();
        total += (risk(0) - own) + envy / kf;
    }
    total / kf
}

/// Constant pooled term `(1/(K n)) * sum_i L_i^0` separating the
/// n-denominator objective from the lower bound.
pub fn pooled_constant(table: &LossTable) -> f64 {
    let n = table.len() as f64;
    (0..table.len()).map(|i| table.pooled_loss(i)).sum::<f64>() / (table.k() as f64 * n)
}

/// `(1/(n K^2)) * sum_i sum_k (L_i^k - 2K pi_i^k L_i^k)`.
pub fn lower_bound_objective(table: &LossTable) -> f64 {
    let k = table.k();
    let kf = k as f64;
    let n = table.len() as f64;
    let mut total = 0.0;
    for i in 0..table.len() {
        let a = table.assignment(i);
        for g in 0..k {
            let l = table.decoupled_loss(i, g);
            let pi = if a == g { 1.0 } else { 0.0 };
            total += l - 2.0 * kf * pi * l;
        }
    }
    total / (n * kf * kf)
}

/// Fraction of samples correctly classified by their assigned classifier.
pub fn assigned_accuracy(table: &LossTable) -> f64 {
    let n = table.len() as f64;
    (0..table.len())
        .map(|i| 1.0 - table.decoupled_loss(i, table.assignment(i)))
        .sum::<f64>()
        / n
}

/// Residual of expressing the lower bound through assigned accuracy:
/// `lb - [(2/K) acc + (1/(n K^2)) sum_i sum_k L_i^k - 2/K]`.
pub fn decomposition_check(table: &LossTable) -> f64 {
    let kf = table.k() as f64;
    let n = table.len() as f64;
    let all: f64 = (0..table.len())
        .map(|i| (0..table.k()).map(|g| table.decoupled_loss(i, g)).sum::<f64>())
        .sum();
    let rhs = 2.0 / kf * assigned_accuracy(table) + all / (n * kf * kf) - 2.0 / kf;
    lower_bound_objective(table) - rhs
}

/// Soft assignments and differentiable losses for a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftTables {
    pub k: usize,
    /// `n x K`, rows on the simplex.
    pub soft_assign: Vec<f64>,
    /// `n x K`, entries in [0, 1].
    pub soft_loss: Vec<f64>,
}

impl SoftTables {
    pub fn len(&self) -> usize {
        self.soft_assign.len() / self.k
    }

    pub fn is_empty(&self) -> bool {
        self.soft_assign.is_empty()
    }

    /// One-hot assignments and hard decoupled losses of a [`LossTable`].
    pub fn from_hard(table: &LossTable) -> Self {
        let k = table.k();
        let mut soft_assign = vec![0.0; table.len() * k];
        let mut soft_loss = Vec::with_capacity(table.len() * k);
        for i in 0..table.len() {
            soft_assign[i * k + table.assignment(i)] = 1.0;
            soft_loss.extend((0..k).map(|g| table.decoupled_loss(i, g)));
        }
        Self {
            k,
            soft_assign,
            soft_loss,
        }
    }
}

/// Differentiable stand-in for the 0-1 loss of a classifier with positive
/// probability `p` on label `y`: `|sigmoid(tau * (p - 1/2)) - (y + 1)/2|`.
pub fn soft_loss(p: f64, y: f64, tau: f64) -> f64 {
    let target = (y + 1.0) / 2.0;
    (sigmoid(tau * (p - 0.5)) - target).abs()
}

/// Balance penalty: minus the KL divergence of the mean soft assignment
/// from the uniform distribution. Zero iff the mean is uniform.
pub fn balance_penalty(mean_assign: &[f64]) -> f64 {
    let kf = mean_assign.len() as f64;
    -mean_assign
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * (p * kf).ln())
        .sum::<f64>()
}

fn column_means(values: &[f64], k: usize) -> Vec<f64> {
    let n = values.len() / k;
    let mut mean = vec![0.0; k];
    for row in values.chunks_exact(k) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    mean
}

/// Surrogate value `(value, gamma)` from precomputed tables.
pub fn surrogate_from_tables(tables: &SoftTables, lambda: f64) -> (f64, f64) {
    let k = tables.k;
    let kf = k as f64;
    let n = tables.len() as f64;
    let mut data_term = 0.0;
    for (pi, l) in tables.soft_assign.iter().zip(&tables.soft_loss) {
        data_term += l - 2.0 * kf * pi * l;
    }
    let gamma = balance_penalty(&column_means(&tables.soft_assign, k));
    (data_term / (n * kf * kf) + lambda * gamma, gamma)
}

/// Soft tables of `system` on `batch` with loss temperature `tau`.
pub fn soft_tables(system: &TrainedSystem, batch: &Dataset, tau: f64) -> Result<SoftTables> {
    let mlp = learned_group(system)?;
    system.check_data(batch)?;
    let k = system.k();
    let mut soft_assign = Vec::with_capacity(batch.len() * k);
    let mut soft_losses = Vec::with_capacity(batch.len() * k);
    for (i, x) in batch.rows().enumerate() {
        soft_assign.extend(mlp.forward_cached(x).probs);
        let y = batch.label(i);
        soft_losses.extend(system.decoupled.iter().map(|h| soft_loss(h.prob(x), y, tau)));
    }
    Ok(SoftTables {
        k,
        soft_assign,
        soft_loss: soft_losses,
    })
}

fn learned_group(system: &TrainedSystem) -> Result<&GroupMlp> {
    system
        .mlp()
        .ok_or_else(|| Error::invalid("surrogate objective needs a learned group classifier"))
}

/// Surrogate value and its gradient with respect to every trainable parameter.
///
/// The gradient containers reuse the parameter types, so every array has
/// the shape of the parameter it differentiates.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateGrad {
    pub value: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub group: GroupMlp,
    pub decoupled: Vec<LogisticModel>,
}

/// Evaluates the relaxed objective
/// `(1/(n K^2)) sum_i sum_k (L~_ik - 2K pi~_ik L~_ik) + lambda * Gamma`
/// on `batch` and backpropagates it into the group network and the decoupled
/// classifiers. The pooled classifier is not part of the relaxed objective.
pub fn surrogate_value_and_grad(
    system: &TrainedSystem,
    batch: &Dataset,
    lambda: f64,
    tau: f64,
) -> Result<SurrogateGrad> {
    let mlp = learned_group(system)?;
    system.check_data(batch)?;
    let k = system.k();
    let kf = k as f64;
    let n = batch.len();
    let nf = n as f64;
    let d = batch.dim();
    let hidden = mlp.hidden();
    let scale = 1.0 / (nf * kf * kf);

    // Forward pass, keeping what the backward pass needs.
    let mut caches = Vec::with_capacity(n);
    let mut losses = vec![0.0; n * k];
    let mut dloss_dz = vec![0.0; n * k];
    for (i, x) in batch.rows().enumerate() {
        let y = batch.label(i);
        let sign = -y; // d|u - (y+1)/2| / du
        for (g, h) in system.decoupled.iter().enumerate() {
            let p = h.prob(x);
            let u = sigmoid(tau * (p - 0.5));
            losses[i * k + g] = soft_loss(p, y, tau);
            dloss_dz[i * k + g] = sign * u * (1.0 - u) * tau * p * (1.0 - p);
        }
        caches.push(mlp.forward_cached(x));
    }
    let mut mean_assign = vec![0.0; k];
    for c in &caches {
        for (m, p) in mean_assign.iter_mut().zip(&c.probs) {
            *m += p / nf;
        }
    }
    let gamma = balance_penalty(&mean_assign);
    let mut data_term = 0.0;
    for (c, l) in caches.iter().zip(losses.chunks_exact(k)) {
        for g in 0..k {
            data_term += l[g] - 2.0 * kf * c.probs[g] * l[g];
        }
    }
    let value = data_term * scale + lambda * gamma;
    // d(lambda * Gamma) / d pi_ik, identical for every sample.
    let dpen: Vec<f64> = mean_assign
        .iter()
        .map(|&m| -lambda * ((kf * m).ln() + 1.0) / nf)
        .collect();
    if lambda != 0.0 && dpen.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("group", "balance penalty gradient is not finite"));
    }

    let mut grad_group = GroupMlp {
        d,
        k,
        w1: vec![0.0; hidden * d],
        b1: vec![0.0; hidden],
        w2: vec![0.0; k * hidden],
        b2: vec![0.0; k],
    };
    let mut grad_dec = vec![LogisticModel::zeros(d); k];
    let mut dpi = vec![0.0; k];
    let mut dlogit = vec![0.0; k];
    let mut dhidden = vec![0.0; hidden];
    for (i, x) in batch.rows().enumerate() {
        let c = &caches[i];
        let l = &losses[i * k..(i + 1) * k];
        for g in 0..k {
            dpi[g] = -2.0 * kf * scale * l[g] + if lambda != 0.0 { dpen[g] } else { 0.0 };
            let coef = scale * (1.0 - 2.0 * kf * c.probs[g]) * dloss_dz[i * k + g];
            let gd = &mut grad_dec[g];
            for (w, v) in gd.weights.iter_mut().zip(x) {
                *w += coef * v;
            }
            gd.bias += coef;
        }
        // Softmax backward.
        let dot: f64 = c.probs.iter().zip(&dpi).map(|(p, g)| p * g).sum();
        for g in 0..k {
            dlogit[g] = c.probs[g] * (dpi[g] - dot);
        }
        dhidden.iter_mut().for_each(|v| *v = 0.0);
        for g in 0..k {
            let row = &mlp.w2[g * hidden..(g + 1) * hidden];
            let grow = &mut grad_group.w2[g * hidden..(g + 1) * hidden];
            for u in 0..hidden {
                grow[u] += dlogit[g] * c.hidden[u];
                dhidden[u] += dlogit[g] * row[u];
            }
            grad_group.b2[g] += dlogit[g];
        }
        for u in 0..hidden {
            if c.pre[u] <= 0.0 {
                continue;
            }
            let du = dhidden[u];
            let grow = &mut grad_group.w1[u * d..(u + 1) * d];
            for (gw, v) in grow.iter_mut().zip(x) {
                *gw += du * v;
            }
            grad_group.b1[u] += du;
        }
    }

    if !value.is_finite() {
        return Err(Error::numeric("objective", "surrogate value is not finite"));
    }
    if !grad_group.is_finite() {
        return Err(Error::numeric("group", "non-finite gradient"));
    }
    if let Some(g) = grad_dec.iter().position(|h| !h.is_finite()) {
        return Err(Error::numeric(format!("decoupled[{g}]"), "non-finite gradient"));
    }
    Ok(SurrogateGrad {
        value,
        gamma,
        lambda,
        group: grad_group,
        decoupled: grad_dec,
    })
}
