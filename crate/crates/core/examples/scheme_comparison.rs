// The menu mechanism against posted tariffs and charge-only service on
// the same fleet and prices.

use v2g_menu::analytics::{compare, compute_kpis};
use v2g_menu::baselines::{tune_markups, Scheme};
use v2g_menu::market_data::SyntheticDay;
use v2g_menu::mechanism::{run_day, MechanismConfig};
use v2g_menu::optimizer::Optimizer;
use v2g_menu::scenario::{generate_fleet, FleetParams};

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let fleet = generate_fleet(
        &FleetParams {
            n_evs: 12,
            ..FleetParams::default()
        },
        4,
    )?;
    let prices = SyntheticDay::default().generate(48, 0.5, 0.10, 4)?;
    let opt = Optimizer::default();
    let cfg = MechanismConfig::default();
    let mut rows = vec![(
        "menu".to_string(),
        compute_kpis(&run_day(&fleet, &prices, &cfg, &opt)?, &fleet)?,
    )];
    for scheme in [Scheme::AdjustedRt, Scheme::Flat, Scheme::Hybrid] {
        let tuned = tune_markups(&fleet, &prices, scheme, &cfg.limits, &opt, 0.10, 2)?;
        if let Some((_, day)) = tuned.best {
            rows.push((scheme.label().to_string(), compute_kpis(&day, &fleet)?));
        }
    }
    let charge_only = MechanismConfig {
        menu: vec![0.0],
        ..cfg
    };
    rows.push((
        "charge_only".into(),
        compute_kpis(&run_day(&fleet, &prices, &charge_only, &opt)?, &fleet)?,
    ));

    for r in compare(&rows, "menu")? {
        let export = r
            .export_change_pct
            .map_or("—".to_string(), |x| format!("{x:+.1}%"));
        println!(
            "vs {:<12} export {:>8}  profit {:+.1}%  payments {:+.1}%",
            r.versus, export, r.profit_change_pct, r.payment_reduction_pct
        );
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run()
}
