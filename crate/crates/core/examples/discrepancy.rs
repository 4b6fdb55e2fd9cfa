//! Estimates the disagreement discrepancy between samples from the same and
//! from shifted synthetic distributions over a grid of random halfspaces.
//!
//! cargo run --release --example discrepancy

use dafh::data::gen_synthetic;
use dafh::metrics::discrepancy_estimate;
use dafh::models::LogisticModel;
use dafh::rng::Stream;

fn main() -> dafh::Result<()> {
    let mut rng = Stream::new(2);
    let grid: Vec<LogisticModel> = (0..20)
        .map(|_| LogisticModel {
            weights: vec![rng.normal(0.0, 1.0), rng.normal(0.0, 1.0)],
            bias: rng.normal(0.0, 0.5),
        })
        .collect();
    let rows = |delta: f64, seed: u64| -> dafh::Result<Vec<Vec<f64>>> {
        Ok(gen_synthetic(5_000, delta, 0.3, seed)?.rows().map(<[f64]>::to_vec).collect())
    };
    let base = rows(0.4, 0)?;
    println!("{:>8} {:>12}", "delta B", "discrepancy");
    for (delta, seed) in [(0.4, 1), (0.6, 2), (0.8, 3), (1.2, 4)] {
        println!("{delta:>8.1} {:>12.4}", discrepancy_estimate(&base, &rows(delta, seed)?, &grid)?);
    }
    Ok(())
}
