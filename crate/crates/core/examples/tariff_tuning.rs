// Grid search over the markups of a posted tariff.

use v2g_menu::baselines::{tune_markups, Scheme};
use v2g_menu::market_data::SyntheticDay;
use v2g_menu::optimizer::{LotLimits, Optimizer};
use v2g_menu::scenario::{generate_fleet, FleetParams};

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let fleet = generate_fleet(
        &FleetParams {
            n_evs: 10,
            ..FleetParams::default()
        },
        2,
    )?;
    let prices = SyntheticDay::default().generate(48, 0.5, 0.10, 2)?;
    let tuned = tune_markups(
        &fleet,
        &prices,
        Scheme::AdjustedRt,
        &LotLimits::default(),
        &Optimizer::default(),
        0.10,
        2,
    )?;
    println!(
        "{} grid points, {} with any takers",
        tuned.evaluated,
        tuned.surface.len()
    );
    match &tuned.best {
        Some((tariff, day)) => println!(
            "best markup {:.2}, discharge offset {:.2}: profit {:.2}, {} EVs",
            tariff.charge_markup,
            tariff.discharge_param,
            day.operator_profit,
            day.accepted()
        ),
        None => println!("no tariff attracts anyone"),
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run()
}
