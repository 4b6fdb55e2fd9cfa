mod common;

use dafh::baselines::AttributeSpec;
use dafh::data::{apply_standardization, gen_synthetic, split, split_indices, standardize, SplitSpec};
use dafh::metrics;
use dafh::models::hard_assign;
use dafh::objective::{self, LossTable, SoftTables};
use proptest::prelude::*;

type Table = (usize, Vec<Vec<f64>>, Vec<usize>);

fn table(max_n: usize) -> impl Strategy<Value = Table> {
    (1..=3usize).prop_flat_map(move |k| {
        let row = (prop::collection::vec(prop::bool::ANY, k + 1), 0..k);
        prop::collection::vec(row, 1..=max_n).prop_map(move |rows| {
            let (losses, assign): (Vec<Vec<f64>>, Vec<usize>) = rows
                .into_iter()
                .map(|(r, a)| (r.into_iter().map(|b| if b { 1.0 } else { 0.0 }).collect(), a))
                .unzip();
            (k, losses, assign)
        })
    })
}

fn loss_table((k, rows, assign): &Table) -> LossTable {
    LossTable::new(rows.clone(), assign.clone(), *k).unwrap()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn exact_objective_matches_nested_loops(t in table(10)) {
        let got = objective::exact_objective(&loss_table(&t));
        match common::exact_objective(&t.1, &t.2, t.0) {
            Some(want) => prop_assert!(close(got.unwrap(), want)),
            None => prop_assert!(got.is_err()),
        }
    }

    #[test]
    fn n_denominator_splits_into_constant_and_lower_bound(t in table(10)) {
        let lt = loss_table(&t);
        let lhs = objective::exact_objective_n_denominator(&lt);
        prop_assert!(close(lhs, common::n_denominator_objective(&t.1, &t.2, t.0)));
        prop_assert!(close(lhs, objective::pooled_constant(&lt) + objective::lower_bound_objective(&lt)));
        prop_assert!(close(objective::pooled_constant(&lt), common::pooled_constant(&t.1, t.0)));
    }

    #[test]
    fn lower_bound_has_accuracy_form(t in table(10)) {
        let lt = loss_table(&t);
        prop_assert!(close(objective::lower_bound_objective(&lt), common::lower_bound(&t.1, &t.2, t.0)));
        prop_assert!(close(objective::assigned_accuracy(&lt), common::assigned_accuracy(&t.1, &t.2)));
        prop_assert!(objective::decomposition_check(&lt).abs() <= 1e-12);
        prop_assert!(close(common::accuracy_form(&t.1, &t.2, t.0), objective::lower_bound_objective(&lt)));
    }

    #[test]
    fn surrogate_on_hard_rows_is_lower_bound(t in table(10)) {
        let lt = loss_table(&t);
        let (value, _) = objective::surrogate_from_tables(&SoftTables::from_hard(&lt), 0.0);
        prop_assert!(close(value, objective::lower_bound_objective(&lt)));
    }

    #[test]
    fn fairness_metrics_match_oracles(t in table(12)) {
        let lt = loss_table(&t);
        let (k, rows, assign) = &t;
        prop_assert!(close(metrics::prob_fwh(&lt), common::prob_fwh(rows, assign)));
        prop_assert_eq!(metrics::violations(&lt), common::violations(rows, assign, *k));
        prop_assert_eq!(metrics::max_gain(&lt), common::max_gain(rows, assign, *k));
        prop_assert_eq!(metrics::min_envy(&lt), common::min_envy(rows, assign, *k));
    }

    #[test]
    fn no_violations_means_nonnegative_gain_and_envy(t in table(12)) {
        let lt = loss_table(&t);
        if metrics::violations(&lt) == 0 {
            prop_assert!(metrics::max_gain(&lt).is_none_or(|g| g >= 0.0));
            prop_assert!(metrics::min_envy(&lt).is_none_or(|e| e >= 0.0));
        }
    }

    #[test]
    fn delta_disparity_matches_oracle(t in table(12), labels in prop::collection::vec(0..3u8, 12)) {
        let lt = loss_table(&t);
        let groups: Vec<String> = labels.iter().take(t.1.len()).map(|g| format!("g{g}")).collect();
        let refs: Vec<&str> = groups.iter().map(String::as_str).collect();
        let got = metrics::delta_disparity_from(&lt, &refs);
        prop_assert!(close(got, common::delta_disparity(&t.1, &t.2, &groups)));
    }

    #[test]
    fn pooled_against_itself_has_zero_delta_disparity(t in table(12), labels in prop::collection::vec(0..3u8, 12)) {
        let k = t.0;
        let rows: Vec<Vec<f64>> = t.1.iter().map(|r| vec![r[0]; k + 1]).collect();
        let lt = LossTable::new(rows, t.2.clone(), k).unwrap();
        let groups: Vec<String> = labels.iter().take(t.1.len()).map(|g| format!("g{g}")).collect();
        let refs: Vec<&str> = groups.iter().map(String::as_str).collect();
        prop_assert_eq!(metrics::delta_disparity_from(&lt, &refs), 0.0);
    }

    #[test]
    fn balance_penalty_is_nonpositive(raw in prop::collection::vec(0.001..1.0f64, 1..6)) {
        let s: f64 = raw.iter().sum();
        let p: Vec<f64> = raw.iter().map(|v| v / s).collect();
        prop_assert!(objective::balance_penalty(&p) <= 1e-15);
        let uniform = vec![1.0 / p.len() as f64; p.len()];
        prop_assert!(objective::balance_penalty(&uniform).abs() <= 1e-15);
    }

    #[test]
    fn soft_loss_is_bounded(p in 0.0..=1.0f64, positive in prop::bool::ANY, tau in 0.1..20.0f64) {
        let y = if positive { 1.0 } else { -1.0 };
        let l = objective::soft_loss(p, y, tau);
        prop_assert!((0.0..=1.0).contains(&l));
        prop_assert!((l + objective::soft_loss(p, -y, tau) - 1.0).abs() <= 1e-15);
    }

    #[test]
    fn hard_assign_is_first_argmax(raw in prop::collection::vec(0.0..1.0f64, 1..8)) {
        let s: f64 = raw.iter().sum::<f64>() + 1e-9;
        let p: Vec<f64> = raw.iter().map(|v| v / s).collect();
        let mut best = 0;
        for (i, v) in p.iter().enumerate() {
            if *v > p[best] {
                best = i;
            }
        }
        prop_assert_eq!(hard_assign(&p).unwrap(), best);
    }

    #[test]
    fn split_partitions_rows(n in 2..500usize, frac in 0.05..0.95f64, seed in any::<u64>(), rep in 0..5u64) {
        let spec = SplitSpec { train_fraction: frac, seed, repeat_index: rep };
        let (train, test) = split_indices(n, &spec).unwrap();
        prop_assert!(!train.is_empty() && !test.is_empty());
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        prop_assert_eq!(split_indices(n, &spec).unwrap(), (train, test));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn standardization_reapplies_exactly(seed in any::<u64>(), n in 20..200usize) {
        let data = gen_synthetic(n, 0.4, 0.3, seed).unwrap();
        let (train, test) = split(&data, &SplitSpec { train_fraction: 0.75, seed, repeat_index: 0 }).unwrap();
        let (std_train, others, schema) = standardize(&train, &[test.clone()]).unwrap();
        let again = apply_standardization(&train, &schema).unwrap();
        for (a, b) in again.features().iter().zip(std_train.features()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
        let test_again = apply_standardization(&test, &schema).unwrap();
        for (a, b) in test_again.features().iter().zip(others[0].features()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn composition_rows_sum_to_one(seed in any::<u64>(), k in 1..5usize) {
        let data = gen_synthetic(300, 0.4, 0.3, seed).unwrap();
        let mut rng = dafh::rng::Stream::new(seed);
        let assign: Vec<usize> = (0..data.len()).map(|_| rng.below(k)).collect();
        let attrs = [AttributeSpec::raw("s1"), AttributeSpec::raw("s2")];
        let comp = metrics::composition(&assign, k, &data, &attrs).unwrap();
        prop_assert_eq!(comp.cells.len(), 4);
        for (g, row) in comp.proportions.iter().enumerate() {
            let total: f64 = row.iter().sum();
            if assign.contains(&g) {
                prop_assert!((total - 1.0).abs() <= 1e-12);
            } else {
                prop_assert_eq!(total, 0.0);
            }
        }
    }
}
