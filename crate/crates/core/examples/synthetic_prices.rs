// Two-peak synthetic wholesale day, operator tariffs, CSV round trip and
// multiplicative price noise.

use v2g_menu::market_data::{
    derive_tariffs, load_price_csv, perturb_prices, write_price_csv, SyntheticDay,
};

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let prices = SyntheticDay::default().generate(48, 0.5, 0.10, 1)?;
    let tariffs = derive_tariffs(&prices);
    for t in (0..48).step_by(6) {
        println!(
            "slot {t:>2}  buy {:.3}  sell {:.3}",
            tariffs.buy_at(t),
            tariffs.sell_at(t)
        );
    }

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("prices.csv");
    write_price_csv(&prices, &path)?;
    let back = load_price_csv(&path, 48, 0.5, 0.10)?;
    assert_eq!(back, prices);

    let noisy = perturb_prices(&prices, 0.10, 42)?;
    let moved = noisy
        .wholesale()
        .iter()
        .zip(prices.wholesale())
        .filter(|(a, b)| a != b)
        .count();
    println!("noise moved {moved} of 48 prices");

    let july = SyntheticDay::for_month(7).generate(48, 0.5, 0.10, 1)?;
    let peak = |p: &[f64]| p.iter().cloned().fold(f64::MIN, f64::max);
    println!(
        "evening peak: default {:.3}, July {:.3}",
        peak(prices.wholesale()),
        peak(july.wholesale())
    );
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run()
}
