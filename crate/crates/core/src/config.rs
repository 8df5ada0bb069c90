//! Run configuration read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::market_data::{PriceSeries, SyntheticDay};
use crate::mechanism::{default_menu, degradation_rate, MechanismConfig, PricingEngine};
use crate::milp::{IndicatorMode, SolveOptions};
use crate::optimizer::{ExclusivityMode, LotLimits, Optimizer};
use crate::scenario::{generate_fleet, FleetParams, FleetScenario};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub horizon_slots: usize,
    pub slot_hours: f64,
    pub feeder_kw: f64,
    pub charger_kw: f64,
    pub charge_efficiency: f64,
    pub discharge_efficiency: f64,
    /// Import adder δ in $/kWh.
    pub import_adder: f64,
    pub menu: Vec<f64>,
    pub n_evs: usize,
    pub capacity_kwh: f64,
    pub valuation_per_kwh: f64,
    pub battery: BatteryConfig,
    pub fleet: FleetShape,
    pub prices: PriceConfig,
    pub seeds: Seeds,
    pub solver: SolverConfig,
    pub tuning: TuningConfig,
    pub monte_carlo: MonteCarloConfig,
    pub sweeps: SweepConfig,
    pub paths: PathsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let eta = 0.9f64.sqrt();
        Self {
            schema_version: SCHEMA_VERSION,
            horizon_slots: 48,
            slot_hours: 0.5,
            feeder_kw: 600.0,
            charger_kw: 60.0,
            charge_efficiency: eta,
            discharge_efficiency: eta,
            import_adder: 0.10,
            menu: default_menu(),
            n_evs: 100,
            capacity_kwh: 60.0,
            valuation_per_kwh: 0.30,
            battery: BatteryConfig::default(),
            fleet: FleetShape::default(),
            prices: PriceConfig::default(),
            seeds: Seeds::default(),
            solver: SolverConfig::default(),
            tuning: TuningConfig::default(),
            monte_carlo: MonteCarloConfig::default(),
            sweeps: SweepConfig::default(),
            paths: PathsConfig::default(),
        }
    }
}

/// Inputs of the degradation rate `R / (L · √rt)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatteryConfig {
    pub replacement_cost: f64,
    pub lifetime_throughput_kwh: f64,
    pub roundtrip_efficiency: f64,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        Self {
            replacement_cost: 12_000.0,
            lifetime_throughput_kwh: 90_000.0,
            roundtrip_efficiency: 0.90,
        }
    }
}

/// Distribution of arrivals and SoC endpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FleetShape {
    pub arrival_rate: Vec<f64>,
    pub soc_initial_mean: f64,
    pub soc_initial_sd: f64,
    pub soc_final_mean: f64,
    pub soc_final_sd: f64,
    pub min_soc_gap: f64,
    pub duration_hours: (f64, f64),
    pub max_resamples: usize,
}

impl Default for FleetShape {
    fn default() -> Self {
        let p = FleetParams::default();
        Self {
            arrival_rate: p.arrival_rate,
            soc_initial_mean: p.soc_initial_mean,
            soc_initial_sd: p.soc_initial_sd,
            soc_final_mean: p.soc_final_mean,
            soc_final_sd: p.soc_final_sd,
            min_soc_gap: p.min_soc_gap,
            duration_hours: p.duration_hours,
            max_resamples: p.max_resamples,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriceConfig {
    /// Seasonal profile for a calendar month; `None` uses `synthetic` as is.
    pub month: Option<u32>,
    pub synthetic: SyntheticDay,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub fleet: u64,
    pub prices: u64,
    pub monte_carlo: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self {
            fleet: 1,
            prices: 1,
            monte_carlo: 7,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub time_limit_s: Option<f64>,
    pub mip_rel_gap: f64,
    pub mode: IndicatorMode,
    pub engine: PricingEngine,
    pub exclusivity: ExclusivityMode,
    /// Concurrent solver instances.
    pub threads: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            time_limit_s: None,
            mip_rel_gap: SolveOptions::default().mip_rel_gap,
            mode: IndicatorMode::default(),
            engine: PricingEngine::default(),
            exclusivity: ExclusivityMode::default(),
            threads: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuningConfig {
    pub step: f64,
}

impl Default for TuningConfig {
    fn default() -> Self {
        Self { step: 0.05 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonteCarloConfig {
    pub scenarios: usize,
    pub sigma: f64,
    pub noise_levels: Vec<f64>,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self {
            scenarios: 1000,
            sigma: 0.10,
            noise_levels: vec![0.1, 0.2, 0.3, 0.4, 0.5],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub menus: Vec<Vec<f64>>,
    pub feeder_kw: Vec<f64>,
    pub fleet_sizes: Vec<usize>,
    pub months: Vec<u32>,
}

/// The seven menus of increasing size used by the menu sweep.
pub fn standard_menus() -> Vec<Vec<f64>> {
    [1usize, 2, 3, 4, 7, 9, 11]
        .iter()
        .map(|&k| (0..k).map(|i| 5.0 * i as f64).collect())
        .collect()
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            menus: standard_menus(),
            feeder_kw: vec![200.0, 300.0, 400.0, 500.0, 600.0, 800.0],
            fleet_sizes: vec![25, 50, 75, 100, 150],
            months: (1..=12).collect(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub scenario: Option<PathBuf>,
    pub prices: Option<PathBuf>,
}

fn invalid(field: &str, message: impl Into<String>) -> Error {
    Error::Validation {
        field: field.into(),
        message: message.into(),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| invalid("<toml>", e.to_string()))?;
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            invalid(&path, e.into_inner().message().trim().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        // relative input paths are relative to the config file
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.paths.scenario, &mut cfg.paths.prices]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid(
                "schema_version",
                format!(
                    "unsupported version {}, expected {SCHEMA_VERSION}",
                    self.schema_version
                ),
            ));
        }
        if self.horizon_slots == 0 {
            return Err(invalid("horizon_slots", "must be > 0"));
        }
        for (f, v) in [
            ("slot_hours", self.slot_hours),
            ("capacity_kwh", self.capacity_kwh),
            ("battery.replacement_cost", self.battery.replacement_cost),
            (
                "battery.lifetime_throughput_kwh",
                self.battery.lifetime_throughput_kwh,
            ),
            ("tuning.step", self.tuning.step),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(f, "must be > 0"));
            }
        }
        if !(self.valuation_per_kwh >= 0.0) {
            return Err(invalid("valuation_per_kwh", "must be >= 0"));
        }
        self.limits().validate()?;
        degradation_rate(
            self.battery.replacement_cost,
            self.battery.lifetime_throughput_kwh,
            self.battery.roundtrip_efficiency,
        )
        .map_err(|e| invalid("battery", e.to_string()))?;
        check_menu_order("menu", &self.menu)?;
        for (i, m) in self.sweeps.menus.iter().enumerate() {
            check_menu_order(&format!("sweeps.menus[{i}]"), m)?;
        }
        if let Some(m) = self.prices.month {
            if !(1..=12).contains(&m) {
                return Err(invalid("prices.month", "must be 1..=12"));
            }
        }
        if self.monte_carlo.scenarios == 0 {
            return Err(invalid("monte_carlo.scenarios", "must be >= 1"));
        }
        if self.solver.threads == 0 {
            return Err(invalid("solver.threads", "must be >= 1"));
        }
        Ok(())
    }

    pub fn limits(&self) -> LotLimits {
        LotLimits {
            feeder_kw: self.feeder_kw,
            charger_kw: self.charger_kw,
            charge_efficiency: self.charge_efficiency,
            discharge_efficiency: self.discharge_efficiency,
            slot_hours: self.slot_hours,
        }
    }

    pub fn degradation(&self) -> f64 {
        degradation_rate(
            self.battery.replacement_cost,
            self.battery.lifetime_throughput_kwh,
            self.battery.roundtrip_efficiency,
        )
        .expect("validated")
    }

    pub fn fleet_params(&self) -> FleetParams {
        let s = &self.fleet;
        FleetParams {
            n_evs: self.n_evs,
            horizon_slots: self.horizon_slots,
            slot_hours: self.slot_hours,
            arrival_rate: s.arrival_rate.clone(),
            capacity_kwh: self.capacity_kwh,
            soc_initial_mean: s.soc_initial_mean,
            soc_initial_sd: s.soc_initial_sd,
            soc_final_mean: s.soc_final_mean,
            soc_final_sd: s.soc_final_sd,
            min_soc_gap: s.min_soc_gap,
            duration_hours: s.duration_hours,
            valuation_per_kwh: self.valuation_per_kwh,
            degradation_per_kwh: self.degradation(),
            charger_kw: self.charger_kw,
            charge_efficiency: self.charge_efficiency,
            max_resamples: s.max_resamples,
        }
    }

    pub fn synthetic_fleet(&self) -> Result<FleetScenario> {
        generate_fleet(&self.fleet_params(), self.seeds.fleet)
    }

    pub fn synthetic_prices(&self) -> Result<PriceSeries> {
        let day = match self.prices.month {
            Some(m) => SyntheticDay::for_month(m),
            None => self.prices.synthetic.clone(),
        };
        day.generate(
            self.horizon_slots,
            self.slot_hours,
            self.import_adder,
            self.seeds.prices,
        )
    }

    pub fn mechanism(&self) -> MechanismConfig {
        MechanismConfig {
            menu: self.menu.clone(),
            limits: self.limits(),
            engine: self.solver.engine,
            threads: self.solver.threads,
        }
    }

    pub fn optimizer(&self) -> Optimizer {
        let options = SolveOptions {
            time_limit_s: self.solver.time_limit_s,
            mip_rel_gap: self.solver.mip_rel_gap,
            indicator_mode: self.solver.mode,
            ..SolveOptions::default()
        };
        Optimizer::default()
            .with_options(options)
            .with_exclusivity(self.solver.exclusivity)
    }
}

fn check_menu_order(field: &str, menu: &[f64]) -> Result<()> {
    if menu.first() != Some(&0.0) {
        return Err(invalid(field, "must start at 0"));
    }
    if !menu.windows(2).all(|w| w[0] < w[1]) || menu.iter().any(|d| !d.is_finite()) {
        return Err(invalid(field, "must be finite and strictly ascending"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_the_reference_setup() {
        let c = RunConfig::default();
        assert_eq!((c.horizon_slots, c.slot_hours, c.n_evs), (48, 0.5, 100));
        assert_eq!(
            (c.capacity_kwh, c.charger_kw, c.feeder_kw),
            (60.0, 60.0, 600.0)
        );
        assert_eq!(c.valuation_per_kwh, 0.30);
        assert!((c.degradation() - 0.1405).abs() < 5e-4);
        assert_eq!(c.menu, default_menu());
        assert_eq!(c.sweeps.menus.len(), 7);
        assert_eq!(c.sweeps.menus[6].last(), Some(&50.0));
        c.validate().unwrap();
    }

    #[test]
    fn empty_file_is_the_default() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
    }

    #[test]
    fn round_trips_through_toml() {
        let mut c = RunConfig::default();
        c.menu = vec![0.0, 10.0];
        c.prices.month = Some(7);
        let back = RunConfig::parse(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
        assert_ne!(RunConfig::default().hash(), c.hash());
    }

    #[test]
    fn errors_name_the_field() {
        let e = RunConfig::parse("[solver]\nthreads = \"four\"\n").unwrap_err();
        assert!(e.to_string().contains("solver.threads"), "{e}");
        let e = RunConfig::parse("[battery]\ncolour = 1\n").unwrap_err();
        assert!(e.to_string().contains("battery"), "{e}");
        let e = RunConfig::parse("menu = [5.0, 10.0]\n").unwrap_err();
        assert!(e.to_string().contains("`menu`"), "{e}");
        let e = RunConfig::parse("schema_version = 2\n").unwrap_err();
        assert!(e.to_string().contains("schema_version"), "{e}");
        assert!(RunConfig::parse("feeder_kw = -1.0\n").is_err());
    }
}
