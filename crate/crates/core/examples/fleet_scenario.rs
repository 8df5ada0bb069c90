// Seeded fleet of arrivals with SoC targets, saved and reloaded as JSON.

use v2g_menu::scenario::{generate_fleet, load_scenario, save_scenario, FleetParams};

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let params = FleetParams {
        n_evs: 20,
        ..FleetParams::default()
    };
    let fleet = generate_fleet(&params, 3)?;
    for ev in fleet.evs.iter().take(5) {
        println!(
            "EV {:>2}: slots {:>2}..{:<2} soc {:.2} -> {:.2}  needs {:.1} kWh",
            ev.id,
            ev.arrival_slot,
            ev.departure_slot,
            ev.soc_initial,
            ev.soc_final,
            ev.required_energy_kwh()
        );
    }
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("fleet.json");
    save_scenario(&fleet, &path)?;
    assert_eq!(load_scenario(&path)?, fleet);
    assert_eq!(generate_fleet(&params, 3)?, fleet);
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run()
}
