use proptest::prelude::*;
use v2g_menu::optimizer::{
    decompose_and_price, solve_cost, solve_menu, verify_schedule, Candidate, Optimizer, Tolerances,
};

mod common;
use common::instance;

#[test]
fn menu_milp_agrees_with_decomposition() {
    let opt = Optimizer::default();
    let mut accepted = 0;
    for seed in 0..200 {
        let (input, menu, arriving) = instance(seed);
        let base = solve_cost(&opt, &input).unwrap().optimal_cost;
        let milp = solve_menu(&opt, &input, &menu, &arriving, base).unwrap();
        let oracle = decompose_and_price(&opt, &input, &menu, &arriving, base, 1).unwrap();
        assert!(
            (milp.realized_profit - oracle.realized_profit).abs() <= 1e-6,
            "seed {seed}: {} vs {}",
            milp.realized_profit,
            oracle.realized_profit
        );
        assert_eq!(
            milp.selected_option_kwh(),
            oracle.selected_option_kwh(),
            "seed {seed}"
        );
        assert_eq!(milp.rejection, oracle.rejection, "seed {seed}");
        if let Some(q) = milp.selected_quote() {
            accepted += 1;
            assert!(q.utility >= -1e-9);
            let mut with = input.clone();
            with.candidate = Some(Candidate {
                profile: arriving.clone(),
                option_kwh: q.option_kwh,
            });
            let v = verify_schedule(
                q.schedule.as_ref().unwrap(),
                &with.requirements(),
                &input.limits,
                Tolerances::default(),
            );
            assert!(v.is_empty(), "seed {seed}: {v:?}");
        }
        for (a, b) in milp.options.iter().zip(&oracle.options) {
            assert_eq!(a.feasible, b.feasible, "seed {seed}");
            if a.feasible {
                assert!(
                    (a.marginal_cost - b.marginal_cost).abs() < 1e-6,
                    "seed {seed}"
                );
            }
        }
    }
    assert!(
        accepted > 40,
        "only {accepted} acceptances; instances too harsh"
    );
}

#[test]
fn marginal_cost_nonincreasing_in_option() {
    let opt = Optimizer::default();
    for seed in 0..40 {
        let (input, _, arriving) = instance(1000 + seed);
        let base = solve_cost(&opt, &input).unwrap().optimal_cost;
        let menu = [0.0, 5.0, 10.0, 20.0, 40.0];
        let s = decompose_and_price(&opt, &input, &menu, &arriving, base, 2).unwrap();
        for w in s.options.windows(2) {
            if w[0].feasible {
                assert!(w[1].feasible);
                assert!(
                    w[1].marginal_cost <= w[0].marginal_cost + 1e-7,
                    "seed {seed}"
                );
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn adding_options_never_lowers_profit(seed in 0u64..10_000, extra in 1usize..8) {
        let opt = Optimizer::default();
        let (input, menu, arriving) = instance(seed);
        let base = solve_cost(&opt, &input).unwrap().optimal_cost;
        let small = solve_menu(&opt, &input, &menu, &arriving, base).unwrap();
        let mut bigger = menu.clone();
        let d = extra as f64 * 5.0 + 0.5;
        bigger.push(d);
        let large = solve_menu(&opt, &input, &bigger, &arriving, base).unwrap();
        prop_assert!(large.realized_profit >= small.realized_profit - 1e-6);
        let max_u = large.options.iter().map(|o| o.utility).fold(0.0, f64::max);
        prop_assert!((large.dual_value - max_u).abs() < 1e-9);
    }
}
