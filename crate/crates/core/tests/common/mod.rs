//! Independent reference implementations used by the integration tests.
//! Nothing here calls into the library's objective or metric code.
#![allow(dead_code)]

use dafh::baselines::Assigner;
use dafh::models::{GroupAssigner, GroupMlp, LogisticModel, TrainedSystem};
use dafh::rng::Stream;
use dafh::training::TrainConfig;

/// Random 0-1 loss table: `rows[i][c]`, column 0 pooled, 1..=k decoupled.
pub fn random_table(rng: &mut Stream, n: usize, k: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let rows = (0..n)
        .map(|_| (0..=k).map(|_| if rng.uniform() < 0.5 { 1.0 } else { 0.0 }).collect())
        .collect();
    let assign = (0..n).map(|_| rng.below(k)).collect();
    (rows, assign)
}

/// Same, but every group receives at least one sample.
pub fn random_covering_table(rng: &mut Stream, n: usize, k: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    assert!(n >= k);
    let (rows, mut assign) = random_table(rng, n, k);
    let perm = rng.permutation(n);
    for (g, &i) in perm.iter().take(k).enumerate() {
        assign[i] = g;
    }
    (rows, assign)
}

/// `risks[g][c]`: mean of column `c` over rows assigned to `g`; `None` when empty.
pub fn group_risks(rows: &[Vec<f64>], assign: &[usize], k: usize) -> Vec<Option<Vec<f64>>> {
    (0..k)
        .map(|g| {
            let members: Vec<&Vec<f64>> = rows.iter().zip(assign).filter(|(_, &a)| a == g).map(|(r, _)| r).collect();
            if members.is_empty() {
                return None;
            }
            let mut sums = vec![0.0; k + 1];
            for r in &members {
                for c in 0..=k {
                    sums[c] += r[c];
                }
            }
            Some(sums.iter().map(|s| s / members.len() as f64).collect())
        })
        .collect()
}

/// (1/K) sum_k { [R_k(h0) - R_k(hk)] + (1/K) sum_j [R_k(hj) - R_k(hk)] }.
pub fn exact_objective(rows: &[Vec<f64>], assign: &[usize], k: usize) -> Option<f64> {
    let risks = group_risks(rows, assign, k);
    let kf = k as f64;
    let mut total = 0.0;
    for g in 0..k {
        let r = risks[g].as_ref()?;
        let own = r[g + 1];
        let mut envy = 0.0;
        for j in 0..k {
            envy += r[j + 1] - own;
        }
        total += (r[0] - own) + envy / kf;
    }
    Some(total / kf)
}

/// The same objective with every group mean replaced by a sum over `n`.
pub fn n_denominator_objective(rows: &[Vec<f64>], assign: &[usize], k: usize) -> f64 {
    let n = rows.len() as f64;
    let kf = k as f64;
    let mut total = 0.0;
    for g in 0..k {
        let mut rational = 0.0;
        let mut envy = 0.0;
        for (r, &a) in rows.iter().zip(assign) {
            if a != g {
                continue;
            }
            rational += r[0] - r[g + 1];
            for j in 0..k {
                envy += r[j + 1] - r[g + 1];
            }
        }
        total += rational / n + envy / (n * kf);
    }
    total / kf
}

pub fn pooled_constant(rows: &[Vec<f64>], k: usize) -> f64 {
    rows.iter().map(|r| r[0]).sum::<f64>() / (k as f64 * rows.len() as f64)
}

/// (1/(nK^2)) sum_i sum_k (L_ik - 2K pi_ik L_ik) with one-hot pi.
pub fn lower_bound(rows: &[Vec<f64>], assign: &[usize], k: usize) -> f64 {
    let n = rows.len() as f64;
    let kf = k as f64;
    let mut s = 0.0;
    for (r, &a) in rows.iter().zip(assign) {
        for g in 0..k {
            let pi = if a == g { 1.0 } else { 0.0 };
            s += r[g + 1] - 2.0 * kf * pi * r[g + 1];
        }
    }
    s / (n * kf * kf)
}

pub fn assigned_accuracy(rows: &[Vec<f64>], assign: &[usize]) -> f64 {
    rows.iter().zip(assign).map(|(r, &a)| 1.0 - r[a + 1]).sum::<f64>() / rows.len() as f64
}

/// (2/K) acc + (1/(nK^2)) sum_i sum_k L_ik - 2/K.
pub fn accuracy_form(rows: &[Vec<f64>], assign: &[usize], k: usize) -> f64 {
    let n = rows.len() as f64;
    let kf = k as f64;
    let all: f64 = rows.iter().map(|r| r[1..].iter().sum::<f64>()).sum();
    2.0 / kf * assigned_accuracy(rows, assign) + all / (n * kf * kf) - 2.0 / kf
}

pub fn prob_fwh(rows: &[Vec<f64>], assign: &[usize]) -> f64 {
    let mut ok = 0;
    for (r, &a) in rows.iter().zip(assign) {
        let own = r[a + 1];
        if r.iter().all(|&l| own <= l) {
            ok += 1;
        }
    }
    ok as f64 / rows.len() as f64
}

pub fn violations(rows: &[Vec<f64>], assign: &[usize], k: usize) -> usize {
    let risks = group_risks(rows, assign, k);
    let mut count = 0;
    for g in 0..k {
        let Some(r) = &risks[g] else { continue };
        if r[g + 1] > r[0] {
            count += 1;
        }
        for j in 0..k {
            if j != g && r[g + 1] > r[j + 1] {
                count += 1;
            }
        }
    }
    count
}

pub fn max_gain(rows: &[Vec<f64>], assign: &[usize], k: usize) -> Option<f64> {
    let risks = group_risks(rows, assign, k);
    let mut best: Option<f64> = None;
    for g in 0..k {
        if let Some(r) = &risks[g] {
            let v = r[0] - r[g + 1];
            best = Some(match best {
                Some(b) if b >= v => b,
                _ => v,
            });
        }
    }
    best
}

pub fn min_envy(rows: &[Vec<f64>], assign: &[usize], k: usize) -> Option<f64> {
    let risks = group_risks(rows, assign, k);
    let mut best: Option<f64> = None;
    for g in 0..k {
        let Some(r) = &risks[g] else { continue };
        for j in 0..k {
            if j == g {
                continue;
            }
            let v = r[j + 1] - r[g + 1];
            best = Some(match best {
                Some(b) if b >= v => b,
                _ => v,
            });
        }
    }
    best
}

/// Largest |acc_a - acc_b| over pairs of reference groups.
pub fn disparity(correct: &[bool], groups: &[String]) -> f64 {
    let mut names: Vec<&String> = groups.iter().collect();
    names.sort();
    names.dedup();
    let acc: Vec<f64> = names
        .iter()
        .map(|name| {
            let idx: Vec<usize> = (0..groups.len()).filter(|&i| &groups[i] == *name).collect();
            idx.iter().filter(|&&i| correct[i]).count() as f64 / idx.len() as f64
        })
        .collect();
    let mut best = 0.0f64;
    for a in &acc {
        for b in &acc {
            best = best.max((a - b).abs());
        }
    }
    best
}

pub fn delta_disparity(rows: &[Vec<f64>], assign: &[usize], groups: &[String]) -> f64 {
    let assigned: Vec<bool> = rows.iter().zip(assign).map(|(r, &a)| r[a + 1] == 0.0).collect();
    let pooled: Vec<bool> = rows.iter().map(|r| r[0] == 0.0).collect();
    disparity(&assigned, groups) - disparity(&pooled, groups)
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Soft assignment of a one-hidden-layer ReLU network with softmax output.
pub fn mlp_probs(m: &GroupMlp, x: &[f64]) -> Vec<f64> {
    let h = m.b1.len();
    let hidden: Vec<f64> = (0..h)
        .map(|u| {
            let mut z = m.b1[u];
            for j in 0..m.d {
                z += m.w1[u * m.d + j] * x[j];
            }
            z.max(0.0)
        })
        .collect();
    let logits: Vec<f64> = (0..m.k)
        .map(|c| {
            let mut z = m.b2[c];
            for u in 0..h {
                z += m.w2[c * h + u] * hidden[u];
            }
            z
        })
        .collect();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// Smallest |pre-activation| of the hidden layer over a batch.
pub fn min_abs_preactivation(m: &GroupMlp, xs: &[Vec<f64>]) -> f64 {
    let h = m.b1.len();
    let mut best = f64::INFINITY;
    for x in xs {
        for u in 0..h {
            let mut z = m.b1[u];
            for j in 0..m.d {
                z += m.w1[u * m.d + j] * x[j];
            }
            best = best.min(z.abs());
        }
    }
    best
}

pub fn logistic_prob(h: &LogisticModel, x: &[f64]) -> f64 {
    logistic(h.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + h.bias)
}

/// Relaxed objective evaluated from scratch.
pub fn surrogate(
    mlp: &GroupMlp,
    decoupled: &[LogisticModel],
    xs: &[Vec<f64>],
    ys: &[f64],
    lambda: f64,
    tau: f64,
) -> f64 {
    let k = decoupled.len();
    let kf = k as f64;
    let n = xs.len() as f64;
    let mut data = 0.0;
    let mut mean = vec![0.0; k];
    for (x, &y) in xs.iter().zip(ys) {
        let pi = mlp_probs(mlp, x);
        let target = if y > 0.0 { 1.0 } else { 0.0 };
        for g in 0..k {
            let u = logistic(tau * (logistic_prob(&decoupled[g], x) - 0.5));
            let l = (u - target).abs();
            data += l - 2.0 * kf * pi[g] * l;
            mean[g] += pi[g] / n;
        }
    }
    let kl: f64 = mean.iter().map(|&p| if p > 0.0 { p * (p * kf).ln() } else { 0.0 }).sum();
    data / (n * kf * kf) - lambda * kl
}

pub fn random_mlp(rng: &mut Stream, d: usize, k: usize, hidden: usize) -> GroupMlp {
    GroupMlp {
        d,
        k,
        w1: (0..hidden * d).map(|_| rng.uniform_in(-1.0, 1.0)).collect(),
        b1: (0..hidden).map(|_| rng.uniform_in(-0.5, 0.5)).collect(),
        w2: (0..k * hidden).map(|_| rng.uniform_in(-1.0, 1.0)).collect(),
        b2: (0..k).map(|_| rng.uniform_in(-0.5, 0.5)).collect(),
    }
}

pub fn random_logistic(rng: &mut Stream, d: usize) -> LogisticModel {
    LogisticModel {
        weights: (0..d).map(|_| rng.normal(0.0, 1.0)).collect(),
        bias: rng.normal(0.0, 0.5),
    }
}

pub fn learned_system(mlp: GroupMlp, decoupled: Vec<LogisticModel>, pooled: LogisticModel) -> TrainedSystem {
    let k = decoupled.len();
    TrainedSystem {
        group: GroupAssigner::Learned(mlp),
        decoupled,
        pooled,
        config: TrainConfig {
            k,
            ..TrainConfig::default()
        },
    }
}

pub fn rule_system(assigner: Assigner, decoupled: Vec<LogisticModel>, pooled: LogisticModel) -> TrainedSystem {
    let k = decoupled.len();
    TrainedSystem {
        group: GroupAssigner::Rule(assigner),
        decoupled,
        pooled,
        config: TrainConfig {
            k,
            ..TrainConfig::default()
        },
    }
}

/// Standard normal CDF.
pub fn phi(z: f64) -> f64 {
    0.5 * (1.0 + libm::erf(z / std::f64::consts::SQRT_2))
}

/// Accuracy of the best halfspace classifier for an isotropic Gaussian
/// mixture `(weight, mean, label)` with common standard deviation `sigma`.
///
/// Scans unit directions on a fine grid; for each direction, the accuracy as
/// a function of the threshold is maximized over a grid refined around the
/// best point. Both orientations are covered by the full circle.
pub fn best_halfspace_accuracy(components: &[(f64, [f64; 2], f64)], sigma: f64) -> f64 {
    let acc = |w: [f64; 2], b: f64| -> f64 {
        components
            .iter()
            .map(|(weight, mu, y)| {
                let margin = (w[0] * mu[0] + w[1] * mu[1] - b) / sigma;
                weight * if *y > 0.0 { phi(margin) } else { phi(-margin) }
            })
            .sum()
    };
    let mut best = 0.0f64;
    let steps = 1440;
    for s in 0..steps {
        let theta = 2.0 * std::f64::consts::PI * s as f64 / steps as f64;
        let w = [theta.cos(), theta.sin()];
        let (mut lo, mut hi) = (-3.0f64, 3.0f64);
        let mut b_best = 0.0;
        for _ in 0..4 {
            let grid = 400;
            let mut local = f64::NEG_INFINITY;
            for t in 0..=grid {
                let b = lo + (hi - lo) * t as f64 / grid as f64;
                let a = acc(w, b);
                if a > local {
                    local = a;
                    b_best = b;
                }
            }
            let span = (hi - lo) / grid as f64 * 2.0;
            lo = b_best - span;
            hi = b_best + span;
            best = best.max(local);
        }
    }
    best
}

/// Components of the synthetic generator restricted to the rows with
/// `s1 * s2 == sign`, with equal weights.
pub fn synthetic_components(delta: f64, sign: f64) -> Vec<(f64, [f64; 2], f64)> {
    let mut out = Vec::new();
    for s1 in [-1.0, 1.0] {
        for s2 in [-1.0, 1.0] {
            if s1 * s2 != sign {
                continue;
            }
            for y in [-1.0, 1.0] {
                let shift = delta * s1 * s2 * y;
                out.push((0.25, [s1 + shift, s2 + shift], y));
            }
        }
    }
    out
}

/// Accuracy floor reference: best linear classifier per s1*s2 sign group,
/// averaged over the two equally likely groups.
pub fn linear_per_sign_group_accuracy(delta: f64, sigma: f64) -> f64 {
    let pos = best_halfspace_accuracy(&synthetic_components(delta, 1.0), sigma);
    let neg = best_halfspace_accuracy(&synthetic_components(delta, -1.0), sigma);
    (pos + neg) / 2.0
}
