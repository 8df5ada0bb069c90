// A full day of arrivals: each EV is quoted a menu on arrival, accepted
// prices are locked, and the fleet is rescheduled around every newcomer.

use v2g_menu::analytics::compute_kpis;
use v2g_menu::market_data::SyntheticDay;
use v2g_menu::mechanism::{run_day, MechanismConfig};
use v2g_menu::optimizer::Optimizer;
use v2g_menu::scenario::{generate_fleet, FleetParams};

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let fleet = generate_fleet(
        &FleetParams {
            n_evs: 15,
            ..FleetParams::default()
        },
        1,
    )?;
    let prices = SyntheticDay::default().generate(48, 0.5, 0.10, 1)?;
    let day = run_day(
        &fleet,
        &prices,
        &MechanismConfig::default(),
        &Optimizer::default(),
    )?;
    for q in day.quotes.iter().take(6) {
        match q.selected_line() {
            Some(l) => println!(
                "EV {:>2} at slot {:>2}: d = {:>4} kWh for {:.3} $",
                q.ev_id, q.slot, l.option_kwh, l.price
            ),
            None => println!(
                "EV {:>2} at slot {:>2}: declines ({:?})",
                q.ev_id, q.slot, q.rejection
            ),
        }
    }
    let k = compute_kpis(&day, &fleet)?;
    println!(
        "accepted {}/{}  profit {:.2}  payments {:.2}  exported {:.1} kWh",
        k.accepted, k.arrivals, k.operator_profit, k.total_ev_payments, k.exported_kwh
    );
    assert!((day.operator_profit - (day.total_payments - day.settlement)).abs() < 1e-6);
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run()
}
