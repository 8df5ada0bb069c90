// Holds a day's schedule and payments fixed and re-prices its grid flows
// under noisy wholesale prices.

use v2g_menu::analytics::monte_carlo_profit;
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
        5,
    )?;
    let prices = SyntheticDay::default().generate(48, 0.5, 0.10, 5)?;
    let cfg = MechanismConfig {
        engine: PricingEngine::Decomposition,
        ..MechanismConfig::default()
    };
    let day = run_day(&fleet, &prices, &cfg, &Optimizer::default())?;
    println!("unperturbed profit {:.2}", day.operator_profit);
    for sigma in [0.1, 0.3, 0.5] {
        let s = monte_carlo_profit(&day, &prices, sigma, 500, 11)?;
        println!(
            "sigma {sigma:.1}: mean |dev| {:.2}%  P(drop > 5%) {:.3}  median {:.2}  IQR {:.2} pp",
            s.mean_abs_pct_deviation, s.prob_profit_drop_gt_5pct, s.median_profit, s.deviation_iqr
        );
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run()
}
