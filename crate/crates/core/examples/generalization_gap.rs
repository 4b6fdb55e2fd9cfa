//! Measures how far the empirical fairness objective of a fixed system
//! strays from its population value as the sample grows, and compares the
//! observed coverage with the concentration bound.
//!
//! cargo run --release --example generalization_gap

use dafh::data::{gen_synthetic, SyntheticParams};
use dafh::metrics::{gap_probability_bound, generalization_gap};
use dafh::training::{train_dafh, TrainConfig};

fn main() -> dafh::Result<()> {
    let population = SyntheticParams::default();
    let train = gen_synthetic(20_000, population.delta, population.sigma, 11)?;
    let system = train_dafh(&train, &TrainConfig { epochs: 5, ..TrainConfig::default() }, None)?.system;

    println!("{:>6} {:>12} {:>12} {:>8} {:>14}", "n", "median gap", "eps(0.95)", "n_min", "freq gap<=eps");
    for n in [400, 1600, 6400] {
        let study = generalization_gap(&system, &population, 200_000, n, 200, 5)?;
        let n_min = study.min_group_size();
        let eps = smallest_eps(system.k(), n_min, 0.95);
        println!(
            "{n:>6} {:>12.5} {:>12.5} {n_min:>8} {:>14.3}",
            study.median_gap(),
            eps,
            study.frequency_within(eps)
        );
    }
    Ok(())
}

fn smallest_eps(k: usize, n_min: usize, target: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 100.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if gap_probability_bound(mid, k, n_min) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}
