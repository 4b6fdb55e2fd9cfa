//! Runs a TOML experiment config end to end and prints the summary table.
//!
//! cargo run --release --example run_experiment -- [config.toml] [out-dir]

use dafh::experiment::{render_markdown, run_experiment, ExperimentConfig, METRICS};

fn main() -> dafh::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let path = args
        .first()
        .cloned()
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/examples/configs/synthetic.toml").to_string());
    let mut config = ExperimentConfig::from_file(&path)?;
    if let Some(out) = args.get(1) {
        config.output_dir = Some(out.into());
    }
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    let report = run_experiment(&config, jobs)?;
    let dir = config.resolved_output_dir();
    report.write_to(&dir)?;
    print!("{}", render_markdown(&report, &METRICS)?);
    println!("config hash {}", report.config_hash);
    println!("artifacts in {}", dir.display());
    if report.failed_cells() > 0 {
        eprintln!("{} cells failed", report.failed_cells());
    }
    Ok(())
}
