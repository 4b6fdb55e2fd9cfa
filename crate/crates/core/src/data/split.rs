use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng::Stream;

/// Seeded train/test split description.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    pub repeat_index: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.75,
            seed: 0,
            repeat_index: 0,
        }
    }
}

/// Train and test row indices. The train block is the first
/// `ceil(train_fraction * n)` entries of a seeded permutation, clamped so
/// both sides are nonempty.
pub fn split_indices(n: usize, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(Error::invalid("split needs at least 2 rows"));
    }
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "train_fraction must be in (0,1), got {}",
            spec.train_fraction
        )));
    }
    let mut rng = Stream::derived(spec.seed, spec.repeat_index);
    let perm = rng.permutation(n);
    let n_train = ((spec.train_fraction * n as f64).ceil() as usize).clamp(1, n - 1);
    let (train, test) = perm.split_at(n_train);
    Ok((train.to_vec(), test.to_vec()))
}

pub fn split(dataset: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    let (train, test) = split_indices(dataset.len(), spec)?;
    Ok((dataset.subset(&train)?, dataset.subset(&test)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn spec(seed: u64, repeat_index: u64) -> SplitSpec {
        SplitSpec {
            train_fraction: 0.75,
            seed,
            repeat_index,
        }
    }

    #[test]
    fn sizes() {
        let (a, b) = split_indices(100, &spec(0, 0)).unwrap();
        assert_eq!((a.len(), b.len()), (75, 25));
    }

    #[test]
    fn deterministic() {
        assert_eq!(split_indices(100, &spec(4, 2)).unwrap(), split_indices(100, &spec(4, 2)).unwrap());
    }

    #[test]
    fn repeats_differ() {
        let sets: Vec<BTreeSet<usize>> = (0..5)
            .map(|r| split_indices(1000, &spec(7, r)).unwrap().0.into_iter().collect())
            .collect();
        for i in 0..5 {
            for j in i + 1..5 {
                assert_ne!(sets[i], sets[j]);
            }
        }
    }

    #[test]
    fn forms_a_partition() {
        let (a, b) = split_indices(37, &spec(1, 0)).unwrap();
        let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..37).collect::<Vec<_>>());
    }

    #[test]
    fn too_small() {
        assert!(split_indices(1, &spec(0, 0)).is_err());
        let (a, b) = split_indices(2, &spec(0, 0)).unwrap();
        assert_eq!((a.len(), b.len()), (1, 1));
    }
}
