// Profit and V2G export as the menu grows from charge-only to eleven options.

use v2g_menu::config::standard_menus;
use v2g_menu::market_data::SyntheticDay;
use v2g_menu::mechanism::{run_day, MechanismConfig, PricingEngine};
use v2g_menu::optimizer::Optimizer;
use v2g_menu::scenario::{generate_fleet, FleetParams};

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let fleet = generate_fleet(
        &FleetParams {
            n_evs: 20,
            ..FleetParams::default()
        },
        6,
    )?;
    let prices = SyntheticDay::default().generate(48, 0.5, 0.10, 6)?;
    for (i, menu) in standard_menus().into_iter().enumerate() {
        let cfg = MechanismConfig {
            menu,
            engine: PricingEngine::Decomposition,
            ..MechanismConfig::default()
        };
        let day = run_day(&fleet, &prices, &cfg, &Optimizer::default())?;
        println!(
            "menu {}: {:>2} options  profit {:>7.2}  exported {:>6.1} kWh",
            i + 1,
            cfg.menu.len(),
            day.operator_profit,
            day.exported_kwh
        );
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run()
}
