//! Lot scheduling and menu pricing problems.
//!
//! [`build_cost_problem`]/[`solve_cost`] compute the minimum settlement cost
//! of serving a fleet. [`build_menu_milp`]/[`solve_menu`] price a menu of
//! discharge allowances for an arriving EV in one MILP, and
//! [`decompose_and_price`] computes the same quotes option by option.

mod block;
mod cost;
mod decompose;
pub mod feasibility;
mod menu;
pub mod schedule;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::TariffPair;
use crate::milp::{self, HighsBackend, MilpBackend, Model, Solution, SolveOptions};
use crate::scenario::EvProfile;

pub use cost::{build_cost_problem, solve_cost, CostProblem, CostSolve};
pub use decompose::decompose_and_price;
pub use feasibility::{verify_schedule, EvRequirement, Rule, Tolerances, Violation};
pub(crate) use menu::check_menu;
pub use menu::{
    build_menu_milp, preferred_option, solve_menu, MenuProblem, MenuSolve, OptionQuote, Rejection,
};
pub use schedule::{EvTrajectory, Schedule};

/// Physical limits of the lot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LotLimits {
    pub feeder_kw: f64,
    pub charger_kw: f64,
    pub charge_efficiency: f64,
    pub discharge_efficiency: f64,
    pub slot_hours: f64,
}

impl Default for LotLimits {
    fn default() -> Self {
        let eta = 0.9f64.sqrt();
        Self {
            feeder_kw: 600.0,
            charger_kw: 60.0,
            charge_efficiency: eta,
            discharge_efficiency: eta,
            slot_hours: 0.5,
        }
    }
}

impl LotLimits {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: &str| {
            Err(Error::Validation {
                field: field.into(),
                message: message.into(),
            })
        };
        if !(self.feeder_kw >= 0.0 && self.feeder_kw.is_finite()) {
            return bad("feeder_kw", "must be finite and >= 0");
        }
        if !(self.charger_kw >= 0.0 && self.charger_kw.is_finite()) {
            return bad("charger_kw", "must be finite and >= 0");
        }
        for (f, v) in [
            ("charge_efficiency", self.charge_efficiency),
            ("discharge_efficiency", self.discharge_efficiency),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return bad(f, "must lie in (0, 1]");
            }
        }
        if !(self.slot_hours > 0.0 && self.slot_hours.is_finite()) {
            return bad("slot_hours", "must be > 0");
        }
        Ok(())
    }
}

/// An EV already holding a contract.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActiveEv {
    pub profile: EvProfile,
    /// SoC at the start of the problem window.
    pub current_soc: f64,
    pub residual_discharge_kwh: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub profile: EvProfile,
    pub option_kwh: f64,
}

#[derive(Clone, Debug)]
pub struct ScheduleProblemInput {
    /// Tariffs over the remaining horizon; the window starts at `tariffs.start_slot`.
    pub tariffs: TariffPair,
    pub active: Vec<ActiveEv>,
    pub candidate: Option<Candidate>,
    pub limits: LotLimits,
}

impl ScheduleProblemInput {
    pub fn validate(&self) -> Result<()> {
        self.limits.validate()?;
        if self.tariffs.is_empty() {
            return Err(Error::arg("problem horizon is empty"));
        }
        for a in &self.active {
            if !(a.residual_discharge_kwh >= 0.0) {
                return Err(Error::Validation {
                    field: format!("active[{}].residual_discharge_kwh", a.profile.id),
                    message: "must be >= 0".into(),
                });
            }
        }
        if let Some(c) = &self.candidate {
            if !(c.option_kwh >= 0.0) {
                return Err(Error::arg("discharge option must be >= 0"));
            }
        }
        Ok(())
    }

    /// Requirements for checking a schedule of this problem.
    pub fn requirements(&self) -> Vec<EvRequirement> {
        let mut reqs: Vec<EvRequirement> = self
            .active
            .iter()
            .map(|a| EvRequirement {
                profile: a.profile.clone(),
                soc_start: a.current_soc,
                discharge_cap_kwh: a.residual_discharge_kwh,
            })
            .collect();
        if let Some(c) = &self.candidate {
            reqs.push(EvRequirement {
                profile: c.profile.clone(),
                soc_start: c.profile.soc_initial,
                discharge_cap_kwh: c.option_kwh,
            });
        }
        reqs
    }

    /// True when simultaneous charge/discharge and import/export can never
    /// lower cost: energy is lost on every round trip, import costs more
    /// than export pays, and exporting never costs money.
    pub fn simultaneity_unprofitable(&self) -> bool {
        let t = &self.tariffs;
        self.limits.charge_efficiency * self.limits.discharge_efficiency < 1.0
            && t.buy.iter().zip(&t.sell).all(|(b, s)| b > s && *s >= 0.0)
    }
}

/// How charge/discharge and import/export exclusivity is enforced.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusivityMode {
    /// Binaries in every model.
    Always,
    /// Solve without binaries and re-solve with them only when the
    /// solution uses both directions in some slot.
    #[default]
    Lazy,
    /// Drop the binaries when simultaneity cannot pay off, otherwise as `Lazy`.
    Relaxed,
}

/// Flows above this count as simultaneous.
pub(crate) const SIMULTANEITY_TOL: f64 = 1e-7;

/// Solver handle plus settings shared by every problem.
#[derive(Clone)]
pub struct Optimizer {
    backend: Arc<dyn MilpBackend>,
    pub options: SolveOptions,
    pub exclusivity: ExclusivityMode,
    dump_dir: Option<PathBuf>,
    dump_counter: Arc<AtomicUsize>,
}

impl std::fmt::Debug for Optimizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Optimizer")
            .field("backend", &self.backend.name())
            .field("options", &self.options)
            .field("exclusivity", &self.exclusivity)
            .field("dump_dir", &self.dump_dir)
            .finish()
    }
}

impl Default for Optimizer {
    fn default() -> Self {
        Self::new(Arc::new(HighsBackend))
    }
}

impl Optimizer {
    pub fn new(backend: Arc<dyn MilpBackend>) -> Self {
        Self {
            backend,
            options: SolveOptions::default(),
            exclusivity: ExclusivityMode::default(),
            dump_dir: None,
            dump_counter: Arc::new(AtomicUsize::new(0)),
        }
    }

    pub fn with_options(mut self, options: SolveOptions) -> Self {
        self.options = options;
        self
    }

    pub fn with_exclusivity(mut self, mode: ExclusivityMode) -> Self {
        self.exclusivity = mode;
        self
    }

    /// Writes every model solved from now on to `dir` as an LP file.
    pub fn with_dump_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.dump_dir = Some(dir.into());
        self
    }

    pub fn dump_dir(&self) -> Option<&Path> {
        self.dump_dir.as_deref()
    }

    pub fn backend(&self) -> &dyn MilpBackend {
        &*self.backend
    }

    pub(crate) fn solve(&self, model: &Model) -> Result<Solution> {
        if let Some(dir) = &self.dump_dir {
            let n = self.dump_counter.fetch_add(1, Ordering::SeqCst);
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let path = dir.join(format!("{n:05}_{}.lp", model.name));
            let mut f =
                std::io::BufWriter::new(fs::File::create(&path).map_err(|e| Error::io(&path, e))?);
            model.write_lp(&mut f).map_err(|e| Error::io(&path, e))?;
        }
        milp::solve(model, &*self.backend, &self.options)
    }

    /// Whether the first solve of a problem should carry exclusivity binaries.
    pub(crate) fn start_with_binaries(&self) -> bool {
        self.exclusivity == ExclusivityMode::Always
    }

    /// Whether a solution with simultaneous flows must be re-solved.
    pub(crate) fn needs_binaries(&self, input: &ScheduleProblemInput) -> bool {
        match self.exclusivity {
            ExclusivityMode::Always | ExclusivityMode::Lazy => true,
            ExclusivityMode::Relaxed => !input.simultaneity_unprofitable(),
        }
    }
}

#[cfg(test)]
pub(crate) mod test_util {
    use super::*;

    pub fn limits(feeder: f64, eta: f64) -> LotLimits {
        LotLimits {
            feeder_kw: feeder,
            charger_kw: 60.0,
            charge_efficiency: eta,
            discharge_efficiency: eta,
            slot_hours: 0.5,
        }
    }

    pub fn ev(id: u32, arr: usize, dep: usize, ini: f64, fin: f64) -> EvProfile {
        EvProfile {
            id,
            arrival_slot: arr,
            departure_slot: dep,
            capacity_kwh: 60.0,
            soc_initial: ini,
            soc_final: fin,
            valuation_per_kwh: 0.30,
            degradation_per_kwh: 0.14,
        }
    }

    pub fn tariffs(start: usize, buy: &[f64], adder: f64) -> TariffPair {
        TariffPair {
            start_slot: start,
            buy: buy.to_vec(),
            sell: buy.iter().map(|b| b - adder).collect(),
        }
    }
}
