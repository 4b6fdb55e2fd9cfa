//! Trains a system, then reports every fairness metric on held-out data
//! together with the composition of each learned group.
//!
//! cargo run --release --example evaluate_fairness

use dafh::baselines::AttributeSpec;
use dafh::data::{gen_synthetic, split, standardize, SplitSpec};
use dafh::metrics::{evaluate, EvalOptions, EvalReport};
use dafh::training::{train_dafh, TrainConfig};

fn main() -> dafh::Result<()> {
    let data = gen_synthetic(20_000, 0.4, 0.3, 0)?;
    let (train, test) = split(&data, &SplitSpec { train_fraction: 0.75, seed: 0, repeat_index: 0 })?;
    let (train, mut rest, _) = standardize(&train, &[test])?;
    let test = rest.remove(0);
    let run = train_dafh(&train, &TrainConfig { epochs: 10, ..TrainConfig::default() }, None)?;

    let opts = EvalOptions {
        disparity_by: Some(AttributeSpec::raw("s1")),
        composition_by: vec![AttributeSpec::raw("s1"), AttributeSpec::raw("s2")],
    };
    let report = evaluate(&run.system, &test, &opts)?;
    for (key, value) in report.to_flat_map() {
        println!("{key:<24} {value}");
    }
    println!();
    println!("{}", EvalReport::CSV_HEADER.join(","));
    println!("{}", report.csv_values().join(","));

    if let Some(comp) = &report.composition {
        println!();
        println!("group composition over ({})", comp.attributes.join(", "));
        for (k, row) in comp.proportions.iter().enumerate() {
            let cells: Vec<String> = comp
                .cells
                .iter()
                .zip(row)
                .map(|(cell, p)| format!("{}={:.3}", cell.join("/"), p))
                .collect();
            println!("group {k}: {}", cells.join("  "));
        }
    }
    Ok(())
}
