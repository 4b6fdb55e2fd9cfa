use serde::{Deserialize, Serialize};

use super::{Assigner, Partition, PartitionSource};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::Stream;

/// Final state of a k-means run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansState {
    pub centroids: Vec<Vec<f64>>,
    pub iterations_run: usize,
    pub inertia: f64,
    /// Inertia after each assignment step.
    pub inertia_history: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of and squared distance to the nearest centroid (lowest index on ties).
pub(crate) fn nearest(centroids: &[Vec<f64>], x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, mu) in centroids.iter().enumerate() {
        let dist = sq_dist(mu, x);
        if dist < best.1 {
            best = (c, dist);
        }
    }
    best
}

fn kmeans_pp(data: &Dataset, k: usize, rng: &mut Stream) -> Vec<Vec<f64>> {
    let n = data.len();
    let mut centroids = vec![data.row(rng.below(n)).to_vec()];
    let mut dist: Vec<f64> = data.rows().map(|x| sq_dist(x, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.uniform() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, d) in dist.iter().enumerate() {
                acc += d;
                if acc > target {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.below(n)
        };
        let c = data.row(pick).to_vec();
        for (d, x) in dist.iter_mut().zip(data.rows()) {
            *d = d.min(sq_dist(x, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Lloyd's algorithm with k-means++ seeding over the model features.
///
/// Stops when the assignment stops changing, when the largest centroid
/// shift drops below `tol`, or after `max_iters` updates. An empty cluster
/// is re-seeded at the point farthest from its current centroid.
pub fn kmeans_partition(data: &Dataset, k: usize, seed: u64, max_iters: usize, tol: f64) -> Result<(Partition, KMeansState)> {
    let n = data.len();
    if k == 0 || n < k {
        return Err(Error::invalid(format!("k-means needs 1 <= K <= n, got K={k}, n={n}")));
    }
    let d = data.dim();
    let mut rng = Stream::derived(seed, 0x4b4d);
    let mut centroids = kmeans_pp(data, k, &mut rng);
    let mut labels = vec![usize::MAX; n];
    let mut history = Vec::new();
    let mut iterations = 0;
    loop {
        let mut changed = false;
        let mut inertia = 0.0;
        let mut far = (0usize, -1.0f64);
        for (i, x) in data.rows().enumerate() {
            let (c, dist) = nearest(&centroids, x);
            changed |= labels[i] != c;
            labels[i] = c;
            inertia += dist;
            if dist > far.1 {
                far = (i, dist);
            }
        }
        history.push(inertia);
        if !changed || iterations >= max_iters {
            break;
        }
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (x, &c) in data.rows().zip(&labels) {
            counts[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(x) {
                *s += v;
            }
        }
        let mut shift = 0.0f64;
        for c in 0..k {
            let next = if counts[c] == 0 {
                data.row(far.0).to_vec()
            } else {
                sums[c].iter().map(|s| s / counts[c] as f64).collect()
            };
            shift = shift.max(sq_dist(&next, &centroids[c]).sqrt());
            centroids[c] = next;
        }
        iterations += 1;
        if shift < tol {
            // Final assignment against the settled centroids.
            let mut inertia = 0.0;
            for (i, x) in data.rows().enumerate() {
                let (c, dist) = nearest(&centroids, x);
                labels[i] = c;
                inertia += dist;
            }
            history.push(inertia);
            break;
        }
    }
    let inertia = *history.last().expect("at least one pass");
    let state = KMeansState {
        centroids: centroids.clone(),
        iterations_run: iterations,
        inertia,
        inertia_history: history,
    };
    let partition = Partition {
        assignment: labels,
        k,
        source: PartitionSource::Kmeans,
        assigner: Assigner::Nearest { centroids },
    };
    Ok((partition, state))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clouds(seed: u64) -> (Dataset, Vec<usize>) {
        let mut rng = Stream::new(seed);
        let mut rows = Vec::new();
        let mut truth = Vec::new();
        for i in 0..200 {
            let c = i % 2;
            let m = if c == 0 { -10.0 } else { 10.0 };
            rows.push(vec![rng.normal(m, 0.1), rng.normal(m, 0.1)]);
            truth.push(c);
        }
        (Dataset::from_rows(&rows, vec![1.0; 200]).unwrap(), truth)
    }

    #[test]
    fn separated_clouds() {
        let (ds, truth) = clouds(1);
        let (p, _) = kmeans_partition(&ds, 2, 5, 300, 1e-6).unwrap();
        let flip = p.assignment[0] != truth[0];
        for (a, t) in p.assignment.iter().zip(&truth) {
            assert_eq!(*a == *t, !flip);
        }
    }

    #[test]
    fn single_cluster_is_the_mean() {
        let (ds, _) = clouds(2);
        let (p, st) = kmeans_partition(&ds, 1, 0, 300, 1e-6).unwrap();
        assert!(p.assignment.iter().all(|&a| a == 0));
        for j in 0..2 {
            let mean = ds.rows().map(|r| r[j]).sum::<f64>() / ds.len() as f64;
            assert!((st.centroids[0][j] - mean).abs() < 1e-9);
        }
    }

    #[test]
    fn monotone_inertia_and_fixed_point() {
        let mut rng = Stream::new(3);
        let rows: Vec<Vec<f64>> = (0..300).map(|_| vec![rng.normal(0.0, 1.0), rng.normal(0.0, 1.0)]).collect();
        let ds = Dataset::from_rows(&rows, vec![1.0; 300]).unwrap();
        let (p, st) = kmeans_partition(&ds, 3, 7, 1000, 0.0).unwrap();
        assert!(st.inertia_history.windows(2).all(|w| w[1] <= w[0] + 1e-9));
        assert_eq!(p.reassign(&ds).unwrap(), p.assignment);
        // centroids are the means of their clusters
        for c in 0..3 {
            let members: Vec<&[f64]> = ds.rows().zip(&p.assignment).filter(|(_, a)| **a == c).map(|(r, _)| r).collect();
            for j in 0..2 {
                let mean = members.iter().map(|r| r[j]).sum::<f64>() / members.len() as f64;
                assert!((st.centroids[c][j] - mean).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn too_few_rows() {
        let ds = Dataset::from_rows(&[vec![0.0]], vec![1.0]).unwrap();
        assert!(kmeans_partition(&ds, 2, 0, 10, 1e-6).is_err());
    }
}
