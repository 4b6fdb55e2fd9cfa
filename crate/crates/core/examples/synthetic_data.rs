//! Generates the two-attribute synthetic dataset, prints per-cell feature
//! means next to their closed form and writes the rows as CSV.
//!
//! cargo run --example synthetic_data -- [rows] [out.csv]

use std::collections::BTreeMap;
use std::fs::File;

use dafh::data::{gen_synthetic, write_csv};

fn main() -> dafh::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n = args.first().map_or(Ok(20_000), |s| s.parse()).expect("rows must be an integer");
    let (delta, sigma) = (0.4, 0.3);
    let data = gen_synthetic(n, delta, sigma, 1)?;
    let table = data.require_sensitive()?;
    let s1 = table.column("s1")?;
    let s2 = table.column("s2")?;

    let mut cells: BTreeMap<(String, String, i32), (f64, f64, usize)> = BTreeMap::new();
    for i in 0..data.len() {
        let key = (s1[i].to_string(), s2[i].to_string(), data.label(i) as i32);
        let e = cells.entry(key).or_default();
        e.0 += data.row(i)[0];
        e.1 += data.row(i)[1];
        e.2 += 1;
    }
    println!("{n} rows, delta={delta}, sigma={sigma}");
    println!("{:>4} {:>4} {:>3} {:>6} {:>9} {:>9} {:>9}", "s1", "s2", "y", "count", "mean x1", "mean x2", "expected");
    for ((a, b, y), (m1, m2, c)) in &cells {
        let (sa, sb): (f64, f64) = (a.parse().unwrap(), b.parse().unwrap());
        let shift = delta * sa * sb * f64::from(*y);
        println!(
            "{a:>4} {b:>4} {y:>3} {c:>6} {:>9.4} {:>9.4} ({:.1}, {:.1})",
            m1 / *c as f64,
            m2 / *c as f64,
            sa + shift,
            sb + shift
        );
    }
    if let Some(path) = args.get(1) {
        write_csv(&data, File::create(path)?)?;
        println!("wrote {path}");
    }
    Ok(())
}
