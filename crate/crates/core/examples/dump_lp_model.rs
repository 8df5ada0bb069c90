// Writes the menu MILP in CPLEX LP format.

use v2g_menu::market_data::TariffPair;
use v2g_menu::optimizer::{build_menu_milp, LotLimits, ScheduleProblemInput};
use v2g_menu::scenario::EvProfile;

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let input = ScheduleProblemInput {
        tariffs: TariffPair {
            start_slot: 0,
            buy: vec![0.15, 0.12, 0.40],
            sell: vec![0.05, 0.02, 0.30],
        },
        active: Vec::new(),
        candidate: None,
        limits: LotLimits::default(),
    };
    let ev = EvProfile {
        id: 7,
        arrival_slot: 0,
        departure_slot: 3,
        capacity_kwh: 60.0,
        soc_initial: 0.4,
        soc_final: 0.6,
        valuation_per_kwh: 0.30,
        degradation_per_kwh: 0.14,
    };
    let problem = build_menu_milp(&input, &[0.0, 5.0], &ev, 0.0, true, None)?;
    let mut text = Vec::new();
    problem
        .model
        .write_lp(&mut text)
        .expect("writing to memory");
    let text = String::from_utf8(text).expect("LP text is UTF-8");
    println!("{}", text.lines().take(12).collect::<Vec<_>>().join("\n"));
    println!(
        "... {} lines, {} binaries",
        text.lines().count(),
        problem.model.num_binaries()
    );
    assert!(text.contains("Binaries") || text.contains("Binary"));
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run()
}
