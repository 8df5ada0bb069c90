// Reads a TOML run configuration and builds the pieces a run needs.

use v2g_menu::config::RunConfig;

const CONFIG: &str = r#"
schema_version = 1
n_evs = 40
feeder_kw = 300.0
menu = [0.0, 10.0, 20.0]

[prices]
month = 7

[solver]
engine = "decomposition"
threads = 2
"#;

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = RunConfig::parse(CONFIG)?;
    println!("config hash {}", &cfg.hash()[..16]);
    println!(
        "degradation {:.4} $/kWh, feeder {} kW",
        cfg.degradation(),
        cfg.limits().feeder_kw
    );
    let fleet = cfg.synthetic_fleet()?;
    let prices = cfg.synthetic_prices()?;
    println!("{} EVs, {} price slots", fleet.evs.len(), prices.len());

    match RunConfig::parse("[solver]\nengine = \"simplex\"\n") {
        Err(e) => println!("rejected: {e}"),
        Ok(_) => unreachable!("unknown engine"),
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run()
}
