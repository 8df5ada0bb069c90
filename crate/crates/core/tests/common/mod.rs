//! Random small pricing instances shared by the integration tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use v2g_menu::market_data::TariffPair;
use v2g_menu::optimizer::{solve_cost, ActiveEv, LotLimits, Optimizer, ScheduleProblemInput};
use v2g_menu::scenario::EvProfile;

fn ev(rng: &mut ChaCha8Rng, id: u32, horizon: usize, arrival: usize) -> EvProfile {
    let dep = rng.random_range(arrival + 1..=horizon);
    let ini = rng.random_range(0.1..0.6);
    EvProfile {
        id,
        arrival_slot: arrival,
        departure_slot: dep,
        capacity_kwh: rng.random_range(30.0..80.0),
        soc_initial: ini,
        soc_final: (ini + rng.random_range(0.0..0.4)).min(1.0),
        valuation_per_kwh: rng.random_range(0.1..0.6),
        degradation_per_kwh: rng.random_range(0.0..0.2),
    }
}

/// A random small pricing instance whose existing fleet is schedulable.
pub fn instance(seed: u64) -> (ScheduleProblemInput, Vec<f64>, EvProfile) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let n = rng.random_range(2..=8);
        let start = rng.random_range(0..3);
        let wholesale: Vec<f64> = (0..n).map(|_| rng.random_range(-0.05..0.6)).collect();
        let adder = rng.random_range(0.0..0.1);
        let tariffs = TariffPair {
            start_slot: start,
            buy: wholesale.iter().map(|w| w + adder).collect(),
            sell: wholesale.clone(),
        };
        let eta: f64 = rng.random_range(0.85..1.0);
        let limits = LotLimits {
            feeder_kw: rng.random_range(20.0..150.0),
            charger_kw: rng.random_range(10.0..60.0),
            charge_efficiency: eta,
            discharge_efficiency: eta,
            slot_hours: 0.5,
        };
        let horizon = start + n;
        let active = (0..rng.random_range(0..=2))
            .map(|i| {
                let p = ev(&mut rng, i, horizon, start.saturating_sub(1));
                ActiveEv {
                    current_soc: p.soc_initial,
                    residual_discharge_kwh: rng.random_range(0.0..15.0),
                    profile: p,
                }
            })
            .filter(|a| a.profile.departure_slot > start)
            .collect();
        let arrival = rng.random_range(start..horizon);
        let arriving = ev(&mut rng, 10, horizon, arrival);
        let k = rng.random_range(1..=4);
        let mut menu: Vec<f64> = Vec::new();
        while menu.len() < k {
            let d = (rng.random_range(0..8) * 5) as f64;
            if !menu.contains(&d) {
                menu.push(d);
            }
        }
        let input = ScheduleProblemInput {
            tariffs,
            active,
            candidate: None,
            limits,
        };
        if solve_cost(&Optimizer::default(), &input)
            .unwrap()
            .is_optimal()
        {
            return (input, menu, arriving);
        }
    }
}
