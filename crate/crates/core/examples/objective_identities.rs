//! Evaluates the exact fairness objective of a randomly initialised system
//! next to its lower bound and accuracy form, then spot-checks the surrogate
//! gradient with central differences.
//!
//! cargo run --example objective_identities

use dafh::data::gen_synthetic;
use dafh::models::{init_system, GroupAssigner};
use dafh::objective::{
    assigned_accuracy, build_loss_table, decomposition_check, exact_objective, exact_objective_n_denominator,
    lower_bound_objective, pooled_constant, surrogate_from_tables, surrogate_value_and_grad, SoftTables,
};
use dafh::rng::Stream;

fn main() -> dafh::Result<()> {
    let data = gen_synthetic(2_000, 0.4, 0.3, 3)?;
    let mut system = init_system(data.dim(), 3, 7)?;
    let mut rng = Stream::new(11);
    for h in system.decoupled.iter_mut().chain(std::iter::once(&mut system.pooled)) {
        h.weights.iter_mut().for_each(|w| *w = rng.normal(0.0, 1.0));
        h.bias = rng.normal(0.0, 0.5);
    }

    let table = build_loss_table(&system, &data)?;
    println!("group sizes            {:?}", table.group_sizes());
    println!("exact objective        {:.12}", exact_objective(&table)?);
    println!("n-denominator variant  {:.12}", exact_objective_n_denominator(&table));
    println!("pooled constant        {:.12}", pooled_constant(&table));
    println!("lower bound            {:.12}", lower_bound_objective(&table));
    println!(
        "constant + lower bound {:.12}",
        pooled_constant(&table) + lower_bound_objective(&table)
    );
    println!("assigned accuracy      {:.6}", assigned_accuracy(&table));
    println!("accuracy-form residual {:.3e}", decomposition_check(&table));
    let (hard, _) = surrogate_from_tables(&SoftTables::from_hard(&table), 0.0);
    println!("surrogate on hard rows {:.12}", hard);

    let batch = data.subset(&(0..64).collect::<Vec<_>>())?;
    let (lambda, tau, step) = (10.0, 1.0, 1e-6);
    let grad = surrogate_value_and_grad(&system, &batch, lambda, tau)?;
    println!();
    println!("surrogate value {:.9}  gamma {:.9}", grad.value, grad.gamma);
    println!("{:<22} {:>14} {:>14} {:>10}", "parameter", "analytic", "numeric", "rel err");
    let value_at = |s: &dafh::TrainedSystem| surrogate_value_and_grad(s, &batch, lambda, tau).map(|g| g.value);
    for (g, h) in grad.decoupled.iter().enumerate() {
        for j in 0..h.weights.len() {
            let mut up = system.clone();
            up.decoupled[g].weights[j] += step;
            let mut down = system.clone();
            down.decoupled[g].weights[j] -= step;
            let numeric = (value_at(&up)? - value_at(&down)?) / (2.0 * step);
            report(&format!("decoupled[{g}].w[{j}]"), h.weights[j], numeric);
        }
    }
    for j in [0, 1, 2] {
        let perturb = |s: &mut dafh::TrainedSystem, by: f64| {
            if let GroupAssigner::Learned(m) = &mut s.group {
                m.w2[j] += by;
            }
        };
        let mut up = system.clone();
        perturb(&mut up, step);
        let mut down = system.clone();
        perturb(&mut down, -step);
        let numeric = (value_at(&up)? - value_at(&down)?) / (2.0 * step);
        report(&format!("group.w2[{j}]"), grad.group.w2[j], numeric);
    }
    Ok(())
}

fn report(name: &str, analytic: f64, numeric: f64) {
    let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12);
    println!("{name:<22} {analytic:>14.6e} {numeric:>14.6e} {rel:>10.2e}");
}
