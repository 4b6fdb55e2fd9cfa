//! Fits the pooled, attribute, intersection and clustering baselines on the
//! synthetic data and compares them on a held-out split.
//!
//! cargo run --release --example baselines

use dafh::baselines::{
    intersection_partition, kmeans_partition, pooled_system, train_on_partition, trivial_partition, AttributeSpec,
    DEFAULT_CELL_CAP,
};
use dafh::data::{gen_synthetic, split, standardize, SplitSpec};
use dafh::metrics::{evaluate, EvalOptions};
use dafh::training::SgdConfig;

fn main() -> dafh::Result<()> {
    let data = gen_synthetic(20_000, 0.4, 0.3, 0)?;
    let (train, test) = split(&data, &SplitSpec { train_fraction: 0.75, seed: 0, repeat_index: 0 })?;
    let (train, mut rest, _) = standardize(&train, &[test])?;
    let test = rest.remove(0);
    let sgd = SgdConfig { epochs: 10, ..SgdConfig::default() };

    let s1 = AttributeSpec::raw("s1");
    let s2 = AttributeSpec::raw("s2");
    let (clusters, _) = kmeans_partition(&train, 4, 0, 100, 1e-9)?;
    let systems = [
        ("pooled", pooled_system(&train, &sgd)?),
        ("trivial(s1)", train_on_partition(&train, &trivial_partition(&train, &s1)?, &sgd)?),
        ("trivial(s2)", train_on_partition(&train, &trivial_partition(&train, &s2)?, &sgd)?),
        ("lr-all(s1,s2)", train_on_partition(&train, &intersection_partition(&train, &[s1, s2], DEFAULT_CELL_CAP)?, &sgd)?),
        ("cluster(k=4)", train_on_partition(&train, &clusters, &sgd)?),
    ];
    println!("{:<14} {:>3} {:>9} {:>9} {:>10} {:>9}", "method", "K", "accuracy", "prob_fwh", "violations", "max_gain");
    for (name, system) in &systems {
        let r = evaluate(system, &test, &EvalOptions::default())?;
        let fmt = |v: Option<f64>| v.map_or("N/A".to_string(), |v| format!("{v:.4}"));
        println!(
            "{name:<14} {:>3} {:>9.4} {:>9} {:>10} {:>9}",
            r.k,
            r.accuracy,
            fmt(r.prob_fwh),
            r.violations.map_or("N/A".to_string(), |v| v.to_string()),
            fmt(r.max_gain)
        );
    }
    Ok(())
}
