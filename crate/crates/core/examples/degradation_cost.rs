// Per-kWh battery wear cost from replacement cost, lifetime throughput
// and round-trip efficiency.

use v2g_menu::mechanism::degradation_rate;

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let gamma = degradation_rate(12_000.0, 90_000.0, 0.90)?;
    println!("degradation cost: {gamma:.4} $/kWh discharged");
    assert!((gamma - 0.1405).abs() < 5e-4);
    for rt in [0.80, 0.85, 0.95] {
        println!(
            "  round trip {rt:.2}: {:.4}",
            degradation_rate(12_000.0, 90_000.0, rt)?
        );
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run()
}
