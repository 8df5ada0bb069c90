// Prices a discharge menu for one arriving EV with the single-level MILP
// and checks it against pricing each option separately.

use v2g_menu::market_data::{derive_tariffs, PriceSeries};
use v2g_menu::optimizer::{
    decompose_and_price, solve_cost, solve_menu, ActiveEv, LotLimits, Optimizer,
    ScheduleProblemInput,
};
use v2g_menu::scenario::EvProfile;

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let prices = PriceSeries::new(
        vec![0.04, 0.05, 0.06, 0.20, 0.42, 0.48, 0.30, 0.12],
        0.5,
        0.10,
    )?;
    let resident = EvProfile {
        id: 1,
        arrival_slot: 0,
        departure_slot: 8,
        capacity_kwh: 60.0,
        soc_initial: 0.3,
        soc_final: 0.8,
        valuation_per_kwh: 0.30,
        degradation_per_kwh: 0.14,
    };
    let arriving = EvProfile {
        id: 2,
        arrival_slot: 1,
        departure_slot: 7,
        soc_initial: 0.5,
        soc_final: 0.7,
        ..resident.clone()
    };
    let input = ScheduleProblemInput {
        tariffs: derive_tariffs(&prices),
        active: vec![ActiveEv {
            current_soc: resident.soc_initial,
            profile: resident,
            residual_discharge_kwh: 0.0,
        }],
        candidate: None,
        limits: LotLimits::default(),
    };
    let opt = Optimizer::default();
    let baseline = solve_cost(&opt, &input)?.optimal_cost;
    let menu = [0.0, 5.0, 10.0, 20.0];
    let milp = solve_menu(&opt, &input, &menu, &arriving, baseline)?;
    let check = decompose_and_price(&opt, &input, &menu, &arriving, baseline, 2)?;

    println!("   d   marginal   markup    price  utility");
    for q in &milp.options {
        println!(
            "{:>4} {:>10.4} {:>8.4} {:>8.4} {:>8.4}",
            q.option_kwh, q.marginal_cost, q.markup, q.price, q.utility
        );
    }
    println!(
        "EV picks d = {:?}, operator profit {:.4}",
        milp.selected_option_kwh(),
        milp.realized_profit
    );
    assert_eq!(milp.selected, check.selected);
    assert!((milp.realized_profit - check.realized_profit).abs() < 1e-6);
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run()
}
