//! Trains a two-group system on the synthetic data, prints the per-epoch
//! trace and saves the model bundle.
//!
//! cargo run --release --example train_dafh -- [epochs] [out.json]

use dafh::data::{gen_synthetic, split, standardize, SplitSpec};
use dafh::models::{save_system, ModelBundle};
use dafh::training::{train_dafh, TrainConfig};

fn main() -> dafh::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let epochs = args.first().map_or(Ok(30), |s| s.parse()).expect("epochs must be an integer");
    let data = gen_synthetic(20_000, 0.4, 0.3, 0)?;
    let (train, test) = split(&data, &SplitSpec { train_fraction: 0.75, seed: 0, repeat_index: 0 })?;
    let (train, mut rest, schema) = standardize(&train, &[test])?;
    let test = rest.remove(0);

    let config = TrainConfig { epochs, ..TrainConfig::default() };
    let run = train_dafh(&train, &config, Some(&test))?;
    println!("{:>5} {:>7} {:>10} {:>9} {:>9} {:>9} {:>14}", "epoch", "step", "surrogate", "train acc", "test acc", "test pfwh", "test groups");
    for rec in run.trace.epoch_ends() {
        let t = rec.test.as_ref().expect("monitor set was given");
        println!(
            "{:>5} {:>7} {:>10.6} {:>9.4} {:>9.4} {:>9.4} {:>14}",
            rec.epoch,
            rec.step,
            rec.train_objective,
            rec.train.accuracy,
            t.accuracy,
            t.prob_fwh,
            format!("{:?}", t.group_sizes)
        );
    }
    if let Some(path) = args.get(1) {
        save_system(&ModelBundle::new(run.system, &schema, "dafh")?, path)?;
        println!("saved {path}");
    }
    Ok(())
}
