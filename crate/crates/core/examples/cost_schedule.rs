// Minimum settlement cost of serving a small fleet, with the schedule
// checked against every physical rule.

use v2g_menu::market_data::derive_tariffs;
use v2g_menu::market_data::PriceSeries;
use v2g_menu::optimizer::{
    solve_cost, verify_schedule, ActiveEv, LotLimits, Optimizer, ScheduleProblemInput, Tolerances,
};
use v2g_menu::scenario::EvProfile;

fn ev(id: u32, arrival: usize, departure: usize, from: f64, to: f64) -> EvProfile {
    EvProfile {
        id,
        arrival_slot: arrival,
        departure_slot: departure,
        capacity_kwh: 60.0,
        soc_initial: from,
        soc_final: to,
        valuation_per_kwh: 0.30,
        degradation_per_kwh: 0.14,
    }
}

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let prices = PriceSeries::new(
        vec![0.12, 0.06, 0.05, 0.09, 0.30, 0.45, 0.25, 0.10],
        0.5,
        0.10,
    )?;
    let active = vec![(ev(1, 0, 6, 0.2, 0.7), 0.0), (ev(2, 1, 8, 0.6, 0.6), 10.0)]
        .into_iter()
        .map(|(p, budget)| ActiveEv {
            current_soc: p.soc_initial,
            profile: p,
            residual_discharge_kwh: budget,
        })
        .collect();
    let input = ScheduleProblemInput {
        tariffs: derive_tariffs(&prices),
        active,
        candidate: None,
        limits: LotLimits {
            feeder_kw: 80.0,
            ..LotLimits::default()
        },
    };
    let solved = solve_cost(&Optimizer::default(), &input)?;
    println!("minimum settlement: {:.4} $", solved.optimal_cost);
    let schedule = solved.schedule.expect("optimal solve has a schedule");
    for (t, (imp, exp)) in schedule
        .import_kw
        .iter()
        .zip(&schedule.export_kw)
        .enumerate()
    {
        println!("slot {t}: import {imp:>6.2} kW  export {exp:>6.2} kW");
    }
    let violations = verify_schedule(
        &schedule,
        &input.requirements(),
        &input.limits,
        Tolerances::default(),
    );
    assert!(violations.is_empty(), "{violations:?}");
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run()
}
