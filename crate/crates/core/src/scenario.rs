//! Daily EV fleets: seeded generation and the JSON scenario file.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type EvId = u32;

/// Declared parameters of one vehicle. Slots are absolute indices; the EV is
/// plugged in for slots `arrival_slot..departure_slot`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvProfile {
    pub id: EvId,
    pub arrival_slot: usize,
    pub departure_slot: usize,
    pub capacity_kwh: f64,
    pub soc_initial: f64,
    pub soc_final: f64,
    pub valuation_per_kwh: f64,
    pub degradation_per_kwh: f64,
}

impl EvProfile {
    /// kWh that must be added to the battery over the stay.
    pub fn required_energy_kwh(&self) -> f64 {
        (self.soc_final - self.soc_initial) * self.capacity_kwh
    }

    /// `α · ΔSoC · C`, the value the owner places on the requested charge.
    pub fn charge_value(&self) -> f64 {
        self.valuation_per_kwh * self.required_energy_kwh()
    }

    pub fn stay_slots(&self) -> usize {
        self.departure_slot.saturating_sub(self.arrival_slot)
    }

    pub fn is_present(&self, slot: usize) -> bool {
        slot >= self.arrival_slot && slot < self.departure_slot
    }

    /// Whether the required energy fits in the stay at full charger power.
    pub fn charging_feasible(
        &self,
        charger_kw: f64,
        charge_efficiency: f64,
        slot_hours: f64,
    ) -> bool {
        self.required_energy_kwh()
            <= charge_efficiency * charger_kw * slot_hours * self.stay_slots() as f64 + 1e-9
    }

    /// Checks the field-level invariants; `field` prefixes error paths.
    pub fn validate(&self, horizon: usize, field: &str) -> Result<()> {
        let fail = |name: &str, message: String| {
            Err(Error::Validation {
                field: format!("{field}.{name}"),
                message,
            })
        };
        if self.arrival_slot >= self.departure_slot {
            return fail(
                "departure_slot",
                format!(
                    "departure {} must be after arrival {}",
                    self.departure_slot, self.arrival_slot
                ),
            );
        }
        if self.departure_slot > horizon {
            return fail(
                "departure_slot",
                format!("departure {} beyond horizon {horizon}", self.departure_slot),
            );
        }
        if !(self.capacity_kwh > 0.0 && self.capacity_kwh.is_finite()) {
            return fail(
                "capacity_kwh",
                format!("must be positive, got {}", self.capacity_kwh),
            );
        }
        if !(0.0..=1.0).contains(&self.soc_initial) {
            return fail(
                "soc_initial",
                format!("{} outside [0, 1]", self.soc_initial),
            );
        }
        if !(0.0..=1.0).contains(&self.soc_final) {
            return fail("soc_final", format!("{} outside [0, 1]", self.soc_final));
        }
        if self.soc_final < self.soc_initial {
            return fail(
                "soc_final",
                format!(
                    "soc_final {} below soc_initial {}",
                    self.soc_final, self.soc_initial
                ),
            );
        }
        if !(self.valuation_per_kwh > 0.0 && self.valuation_per_kwh.is_finite()) {
            return fail(
                "valuation_per_kwh",
                format!("must be positive, got {}", self.valuation_per_kwh),
            );
        }
        if !(self.degradation_per_kwh >= 0.0 && self.degradation_per_kwh.is_finite()) {
            return fail(
                "degradation_per_kwh",
                format!("must be non-negative, got {}", self.degradation_per_kwh),
            );
        }
        Ok(())
    }
}

/// One simulated day of arrivals, sorted by `(arrival_slot, id)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FleetScenario {
    pub seed: u64,
    pub horizon_slots: usize,
    pub slot_hours: f64,
    pub evs: Vec<EvProfile>,
}

impl FleetScenario {
    pub fn empty(horizon_slots: usize, slot_hours: f64) -> Self {
        Self {
            seed: 0,
            horizon_slots,
            slot_hours,
            evs: Vec::new(),
        }
    }

    fn sort(&mut self) {
        self.evs.sort_by_key(|e| (e.arrival_slot, e.id));
    }

    fn is_sorted(&self) -> bool {
        self.evs
            .windows(2)
            .all(|w| (w[0].arrival_slot, w[0].id) <= (w[1].arrival_slot, w[1].id))
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon_slots == 0 {
            return Err(Error::Validation {
                field: "horizon_slots".into(),
                message: "must be positive".into(),
            });
        }
        if !(self.slot_hours > 0.0) {
            return Err(Error::Validation {
                field: "slot_hours".into(),
                message: format!("must be positive, got {}", self.slot_hours),
            });
        }
        let mut ids = std::collections::BTreeSet::new();
        for (i, ev) in self.evs.iter().enumerate() {
            ev.validate(self.horizon_slots, &format!("evs[{i}]"))?;
            if !ids.insert(ev.id) {
                return Err(Error::Validation {
                    field: format!("evs[{i}].id"),
                    message: format!("duplicate id {}", ev.id),
                });
            }
        }
        Ok(())
    }

    /// First `n` arrivals in order; used by fleet-size sweeps.
    pub fn truncated(&self, n: usize) -> Self {
        Self {
            evs: self.evs.iter().take(n).cloned().collect(),
            ..self.clone()
        }
    }
}

pub fn save_scenario(s: &FleetScenario, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(s)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_scenario(path: &Path) -> Result<FleetScenario> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scenario(&text)
}

/// Parses and validates a scenario document, re-sorting unsorted arrivals.
pub fn parse_scenario(text: &str) -> Result<FleetScenario> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let mut s: FleetScenario =
        serde_path_to_error::deserialize(de).map_err(|e| Error::Validation {
            field: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
    s.validate()?;
    if !s.is_sorted() {
        log::warn!("scenario arrivals were not sorted; re-sorting by (arrival_slot, id)");
        s.sort();
    }
    Ok(s)
}

/// Statistical setup for [`generate_fleet`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FleetParams {
    pub n_evs: usize,
    pub horizon_slots: usize,
    pub slot_hours: f64,
    /// Relative arrival intensity per slot; normalized internally.
    /// Empty means [`default_arrival_profile`].
    pub arrival_rate: Vec<f64>,
    pub capacity_kwh: f64,
    pub soc_initial_mean: f64,
    pub soc_initial_sd: f64,
    pub soc_final_mean: f64,
    pub soc_final_sd: f64,
    pub min_soc_gap: f64,
    pub duration_hours: (f64, f64),
    pub valuation_per_kwh: f64,
    pub degradation_per_kwh: f64,
    pub charger_kw: f64,
    pub charge_efficiency: f64,
    pub max_resamples: usize,
}

impl Default for FleetParams {
    fn default() -> Self {
        Self {
            n_evs: 100,
            horizon_slots: 48,
            slot_hours: 0.5,
            arrival_rate: Vec::new(),
            capacity_kwh: 60.0,
            soc_initial_mean: 0.30,
            soc_initial_sd: 0.10,
            soc_final_mean: 0.80,
            soc_final_sd: 0.10,
            min_soc_gap: 0.05,
            duration_hours: (2.0, 6.0),
            valuation_per_kwh: 0.30,
            degradation_per_kwh: crate::mechanism::degradation_rate(12_000.0, 90_000.0, 0.90)
                .expect("default degradation inputs are valid"),
            charger_kw: 60.0,
            charge_efficiency: 0.90_f64.sqrt(),
            max_resamples: 1_000,
        }
    }
}

/// Bimodal intensity: high 06:00–10:00 and 14:00–18:00, moderate between and
/// into the evening, low overnight.
pub fn default_arrival_profile(horizon: usize, slot_hours: f64) -> Vec<f64> {
    (0..horizon)
        .map(|t| {
            let h = t as f64 * slot_hours;
            match h {
                h if (6.0..10.0).contains(&h) || (14.0..18.0).contains(&h) => 1.0,
                h if (10.0..14.0).contains(&h) || (18.0..21.0).contains(&h) => 0.3,
                _ => 0.03,
            }
        })
        .collect()
}

fn truncated_normal(rng: &mut ChaCha8Rng, mean: f64, sd: f64, max_tries: usize) -> Option<f64> {
    if sd == 0.0 {
        return (0.0..=1.0).contains(&mean).then_some(mean);
    }
    let n = Normal::new(mean, sd).ok()?;
    (0..max_tries)
        .map(|_| n.sample(rng))
        .find(|x| (0.0..=1.0).contains(x))
}

/// Draws `n_evs` vehicles from the time-varying arrival intensity.
///
/// Conditional on the day's count, arrival slots of a Poisson process are
/// i.i.d. with density proportional to the intensity. SoC endpoints are
/// truncated normals on `[0, 1]`, swapped if out of order; draws with a gap
/// below `min_soc_gap`, or whose energy cannot be delivered within the stay
/// at full charger power, are rejected and redrawn.
pub fn generate_fleet(params: &FleetParams, seed: u64) -> Result<FleetScenario> {
    let horizon = params.horizon_slots;
    let profile = if params.arrival_rate.is_empty() {
        default_arrival_profile(horizon, params.slot_hours)
    } else {
        params.arrival_rate.clone()
    };
    if profile.len() != horizon {
        return Err(Error::arg(format!(
            "arrival profile has {} entries for horizon {horizon}",
            profile.len()
        )));
    }
    let (dmin, dmax) = params.duration_hours;
    if !(dmin > 0.0 && dmin <= dmax && dmax <= horizon as f64 * params.slot_hours) {
        return Err(Error::arg(format!(
            "duration range ({dmin}, {dmax}) must lie within (0, {}]",
            horizon as f64 * params.slot_hours
        )));
    }
    let mut s = FleetScenario {
        seed,
        horizon_slots: horizon,
        slot_hours: params.slot_hours,
        evs: Vec::with_capacity(params.n_evs),
    };
    if params.n_evs == 0 {
        return Ok(s);
    }
    let arrivals =
        WeightedIndex::new(&profile).map_err(|e| Error::arg(format!("arrival profile: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    for id in 0..params.n_evs {
        let mut drawn = None;
        for _ in 0..params.max_resamples {
            let arrival = arrivals.sample(&mut rng);
            let hours = rng.random_range(dmin..=dmax);
            let slots = (hours / params.slot_hours - 1e-9).ceil().max(1.0) as usize;
            let departure = (arrival + slots).min(horizon);
            let (Some(a), Some(b)) = (
                truncated_normal(
                    &mut rng,
                    params.soc_initial_mean,
                    params.soc_initial_sd,
                    1000,
                ),
                truncated_normal(&mut rng, params.soc_final_mean, params.soc_final_sd, 1000),
            ) else {
                continue;
            };
            let (ini, fin) = if b >= a { (a, b) } else { (b, a) };
            if fin - ini < params.min_soc_gap {
                continue;
            }
            let ev = EvProfile {
                id: id as EvId,
                arrival_slot: arrival,
                departure_slot: departure,
                capacity_kwh: params.capacity_kwh,
                soc_initial: ini,
                soc_final: fin,
                valuation_per_kwh: params.valuation_per_kwh,
                degradation_per_kwh: params.degradation_per_kwh,
            };
            if departure > arrival
                && ev.charging_feasible(
                    params.charger_kw,
                    params.charge_efficiency,
                    params.slot_hours,
                )
            {
                drawn = Some(ev);
                break;
            }
        }
        match drawn {
            Some(ev) => s.evs.push(ev),
            None => {
                return Err(Error::Generation(format!(
                    "EV {id}: no feasible draw after {} resamples",
                    params.max_resamples
                )))
            }
        }
    }
    s.sort();
    Ok(s)
}
