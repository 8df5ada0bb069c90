//! Rolling-horizon menu pricing over a day of arrivals.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::{derive_tariffs, slice_horizon, PriceSeries, TariffPair};
use crate::optimizer::{
    check_menu, decompose_and_price, preferred_option, solve_cost, solve_menu, verify_schedule,
    ActiveEv, EvRequirement, EvTrajectory, LotLimits, MenuSolve, Optimizer, Rejection, Schedule,
    ScheduleProblemInput, Tolerances,
};
use crate::scenario::{EvId, EvProfile, FleetScenario};

/// Degradation cost per kWh discharged: `R / (L · √rt)`.
pub fn degradation_rate(
    replacement_cost: f64,
    lifetime_throughput_kwh: f64,
    roundtrip_efficiency: f64,
) -> Result<f64> {
    if !(replacement_cost >= 0.0) || !(lifetime_throughput_kwh > 0.0) {
        return Err(Error::arg(
            "replacement cost must be >= 0 and lifetime throughput > 0",
        ));
    }
    if !(roundtrip_efficiency > 0.0 && roundtrip_efficiency <= 1.0) {
        return Err(Error::arg("round-trip efficiency must lie in (0, 1]"));
    }
    Ok(replacement_cost / (lifetime_throughput_kwh * roundtrip_efficiency.sqrt()))
}

/// `α·(s_fin − s_ini)·C − π − γ·d`.
pub fn ev_utility(ev: &EvProfile, option_kwh: f64, price: f64) -> f64 {
    ev.charge_value() - price - ev.degradation_per_kwh * option_kwh
}

/// Menu default: 0 to 40 kWh in steps of 5.
pub fn default_menu() -> Vec<f64> {
    (0..=8).map(|k| 5.0 * k as f64).collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PricingEngine {
    /// One MILP per arrival.
    #[default]
    Milp,
    /// One cost solve per option.
    Decomposition,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MechanismConfig {
    pub menu: Vec<f64>,
    pub limits: LotLimits,
    pub engine: PricingEngine,
    /// Concurrent option solves for the decomposition engine.
    pub threads: usize,
}

impl Default for MechanismConfig {
    fn default() -> Self {
        Self {
            menu: default_menu(),
            limits: LotLimits::default(),
            engine: PricingEngine::default(),
            threads: 1,
        }
    }
}

/// Infeasible options carry non-finite numbers, written as JSON `null`.
mod nullable {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuoteLine {
    pub option_kwh: f64,
    pub feasible: bool,
    #[serde(with = "nullable")]
    pub marginal_cost: f64,
    #[serde(with = "nullable")]
    pub markup: f64,
    #[serde(with = "nullable")]
    pub price: f64,
    #[serde(with = "nullable")]
    pub utility: f64,
    #[serde(with = "nullable")]
    pub profit: f64,
}

/// The menu shown to one EV and its response.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quote {
    pub ev_id: EvId,
    pub slot: usize,
    pub baseline_cost: f64,
    pub options: Vec<QuoteLine>,
    pub selected: Option<usize>,
    pub rejection: Option<Rejection>,
    pub solve_seconds: f64,
}

impl Quote {
    pub fn selected_line(&self) -> Option<&QuoteLine> {
        self.selected.map(|i| &self.options[i])
    }

    pub fn accepted(&self) -> bool {
        self.selected.is_some()
    }
}

/// The EV's choice: highest nonnegative utility, ties to the highest
/// operator profit, then the largest option, then the lowest index.
pub fn select_option(quote: &Quote) -> Option<usize> {
    let items: Vec<(f64, f64, f64)> = quote
        .options
        .iter()
        .map(|l| {
            let u = if l.feasible {
                l.utility
            } else {
                f64::NEG_INFINITY
            };
            (l.option_kwh, u, l.profit)
        })
        .collect();
    preferred_option(&items)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Contract {
    pub ev_id: EvId,
    pub accepted_option_kwh: f64,
    pub price: f64,
    pub acceptance_slot: usize,
    pub discharged_kwh: f64,
    pub residual_discharge_kwh: f64,
}

/// Lot state between arrivals.
#[derive(Clone, Debug, Serialize)]
pub struct LotState {
    pub current_slot: usize,
    pub limits: LotLimits,
    /// Full-day tariffs.
    pub tariffs: TariffPair,
    /// Every contract signed so far, by EV id.
    pub contracts: BTreeMap<EvId, Contract>,
    /// Accepted EVs still plugged in, with their SoC at `current_slot`.
    pub active: BTreeMap<EvId, (EvProfile, f64)>,
    /// Whole day; slots before `current_slot` are final.
    pub realized: Schedule,
    /// From `current_slot` to the end of the day.
    pub planned: Schedule,
    pub cumulative_settlement: f64,
    pub cumulative_payments: f64,
}

impl LotState {
    pub fn new(tariffs: TariffPair, limits: LotLimits) -> Self {
        let n = tariffs.len();
        let start = tariffs.start_slot;
        Self {
            current_slot: start,
            limits,
            realized: Schedule::empty(start, n),
            planned: Schedule::empty(start, n),
            tariffs,
            contracts: BTreeMap::new(),
            active: BTreeMap::new(),
            cumulative_settlement: 0.0,
            cumulative_payments: 0.0,
        }
    }

    pub fn horizon_end(&self) -> usize {
        self.tariffs.end_slot()
    }

    fn invariant(&self, message: String) -> Error {
        Error::Invariant {
            message,
            dump: serde_json::to_string_pretty(self)
                .unwrap_or_else(|e| format!("<unserializable state: {e}>")),
        }
    }

    /// Executes the plan up to (not including) `slot`, then drops EVs
    /// whose stay has ended.
    pub fn advance_to(&mut self, slot: usize) -> Result<()> {
        let slot = slot.min(self.horizon_end());
        if slot < self.current_slot {
            return Err(Error::arg(format!(
                "cannot move back from slot {} to {slot}",
                self.current_slot
            )));
        }
        let tau = self.limits.slot_hours;
        for t in self.current_slot..slot {
            let k = t - self.planned.start_slot;
            let r = t - self.realized.start_slot;
            let imp = self.planned.import_kw[k];
            let exp = self.planned.export_kw[k];
            self.realized.import_kw[r] = imp;
            self.realized.export_kw[r] = exp;
            self.cumulative_settlement +=
                (self.tariffs.buy_at(t) * imp - self.tariffs.sell_at(t) * exp) * tau;
            for traj in &self.planned.evs {
                let id = traj.ev_id;
                let Some((profile, soc)) = self.active.get_mut(&id) else {
                    continue;
                };
                let (ch, dis) = (traj.charge_kw[k], traj.discharge_kw[k]);
                *soc = crate::optimizer::schedule::soc_step(
                    *soc,
                    ch,
                    dis,
                    profile.capacity_kwh,
                    &self.limits,
                );
                let real = self
                    .realized
                    .trajectory_mut(id)
                    .expect("accepted EVs have a realized trajectory");
                real.charge_kw[r] = ch;
                real.discharge_kw[r] = dis;
                real.soc[r] = *soc;
                // Hold the SoC flat after this slot until overwritten.
                for later in &mut real.soc[r + 1..] {
                    *later = *soc;
                }
                if dis > 0.0 {
                    let c = self
                        .contracts
                        .get_mut(&id)
                        .expect("active EVs hold a contract");
                    c.discharged_kwh += dis * tau;
                    c.residual_discharge_kwh = (c.accepted_option_kwh - c.discharged_kwh).max(0.0);
                }
            }
        }
        self.current_slot = slot;
        self.planned = self.planned.tail(slot);

        let departed: Vec<EvId> = self
            .active
            .iter()
            .filter(|(_, (p, _))| p.departure_slot <= slot)
            .map(|(&id, _)| id)
            .collect();
        for id in departed {
            let (p, soc) = self.active.remove(&id).expect("listed above");
            if soc < p.soc_final - 1e-6 {
                return Err(self.invariant(format!(
                    "EV {id} left at slot {} with SoC {soc} below its target {}",
                    p.departure_slot, p.soc_final
                )));
            }
            self.planned.evs.retain(|e| e.ev_id != id);
        }
        Ok(())
    }

    /// The scheduling problem for the accepted fleet over the rest of the day.
    pub fn problem_input(&self) -> Result<ScheduleProblemInput> {
        Ok(ScheduleProblemInput {
            tariffs: slice_horizon(&self.tariffs, self.current_slot)?,
            active: self
                .active
                .iter()
                .map(|(id, (p, soc))| ActiveEv {
                    profile: p.clone(),
                    current_soc: *soc,
                    residual_discharge_kwh: self.contracts[id].residual_discharge_kwh,
                })
                .collect(),
            candidate: None,
            limits: self.limits.clone(),
        })
    }

    fn check_plan(&self) -> Result<()> {
        let reqs: Vec<EvRequirement> = self
            .active
            .iter()
            .map(|(id, (p, soc))| EvRequirement {
                profile: p.clone(),
                soc_start: *soc,
                discharge_cap_kwh: self.contracts[id].residual_discharge_kwh,
            })
            .collect();
        let v = verify_schedule(&self.planned, &reqs, &self.limits, Tolerances::default());
        if v.is_empty() {
            Ok(())
        } else {
            let list: Vec<String> = v.iter().take(10).map(|x| x.to_string()).collect();
            Err(self.invariant(format!("planned schedule infeasible: {}", list.join("; "))))
        }
    }
}

/// Steps a [`LotState`] through arrivals.
pub struct Mechanism {
    pub config: MechanismConfig,
    pub optimizer: Optimizer,
    pub state: LotState,
    pub quotes: Vec<Quote>,
}

impl Mechanism {
    pub fn new(tariffs: TariffPair, config: MechanismConfig, optimizer: Optimizer) -> Result<Self> {
        config.limits.validate()?;
        check_menu(&config.menu)?;
        Ok(Self {
            state: LotState::new(tariffs, config.limits.clone()),
            config,
            optimizer,
            quotes: Vec::new(),
        })
    }

    fn price(
        &self,
        input: &ScheduleProblemInput,
        ev: &EvProfile,
        baseline: f64,
    ) -> Result<MenuSolve> {
        match self.config.engine {
            PricingEngine::Milp => {
                solve_menu(&self.optimizer, input, &self.config.menu, ev, baseline)
            }
            PricingEngine::Decomposition => decompose_and_price(
                &self.optimizer,
                input,
                &self.config.menu,
                ev,
                baseline,
                self.config.threads,
            ),
        }
    }

    /// Quotes a menu to `ev`, applies its choice and commits on acceptance.
    pub fn process_arrival(&mut self, ev: &EvProfile) -> Result<&Quote> {
        let clock = Instant::now();
        if ev.arrival_slot < self.state.current_slot {
            return Err(Error::arg(format!(
                "EV {} arrives at slot {} but the lot is at slot {}",
                ev.id, ev.arrival_slot, self.state.current_slot
            )));
        }
        if self.state.contracts.contains_key(&ev.id) {
            return Err(Error::arg(format!("EV {} already holds a contract", ev.id)));
        }
        self.state.advance_to(ev.arrival_slot)?;

        let (solve, baseline) = if ev.arrival_slot >= self.state.horizon_end() {
            (None, 0.0)
        } else {
            let input = self.state.problem_input()?;
            let base = solve_cost(&self.optimizer, &input)?;
            if !base.is_optimal() {
                return Err(self.state.invariant(format!(
                    "committed fleet is not schedulable at slot {} ({:?})",
                    self.state.current_slot, base.status
                )));
            }
            let solve = self.price(&input, ev, base.optimal_cost)?;
            (Some(solve), base.optimal_cost)
        };

        let mut quote = Quote {
            ev_id: ev.id,
            slot: ev.arrival_slot,
            baseline_cost: baseline,
            options: Vec::new(),
            selected: None,
            rejection: Some(Rejection::NoOverlap),
            solve_seconds: 0.0,
        };
        let mut schedules: Vec<Option<Schedule>> = Vec::new();
        if let Some(solve) = solve {
            quote.rejection = solve.rejection;
            for o in solve.options {
                quote.options.push(QuoteLine {
                    option_kwh: o.option_kwh,
                    feasible: o.feasible,
                    marginal_cost: o.marginal_cost,
                    markup: o.markup,
                    price: o.price,
                    utility: if o.feasible {
                        ev_utility(ev, o.option_kwh, o.price)
                    } else {
                        f64::NEG_INFINITY
                    },
                    profit: o.profit,
                });
                schedules.push(o.schedule);
            }
            quote.selected = select_option(&quote);
            if quote.selected.is_none() && quote.rejection.is_none() {
                quote.rejection = Some(Rejection::NegativeUtility);
            }
            if quote.selected.is_some() {
                quote.rejection = None;
            }
        }

        if let Some(i) = quote.selected {
            let line = &quote.options[i];
            let plan = schedules[i].take().ok_or_else(|| {
                self.state
                    .invariant(format!("no schedule for EV {}'s selected option", ev.id))
            })?;
            self.state.contracts.insert(
                ev.id,
                Contract {
                    ev_id: ev.id,
                    accepted_option_kwh: line.option_kwh,
                    price: line.price,
                    acceptance_slot: ev.arrival_slot,
                    discharged_kwh: 0.0,
                    residual_discharge_kwh: line.option_kwh,
                },
            );
            self.state.cumulative_payments += line.price;
            self.state
                .active
                .insert(ev.id, (ev.clone(), ev.soc_initial));
            let n = self.state.realized.n_slots();
            self.state
                .realized
                .upsert(EvTrajectory::idle(ev.id, ev.soc_initial, n));
            self.state.planned = plan;
            self.state.check_plan()?;
        }
        quote.solve_seconds = clock.elapsed().as_secs_f64();
        self.quotes.push(quote);
        Ok(self.quotes.last().expect("just pushed"))
    }

    /// Executes the remaining plan to the end of the day.
    pub fn finish(mut self, scenario_seed: Option<u64>) -> Result<DayResult> {
        let end = self.state.horizon_end();
        self.state.advance_to(end)?;
        if !self.state.active.is_empty() {
            return Err(self
                .state
                .invariant("EVs still active at the end of the day".into()));
        }
        let s = &self.state;
        let tau = s.limits.slot_hours;
        Ok(DayResult {
            scenario_seed,
            horizon_slots: s.tariffs.len(),
            slot_hours: tau,
            menu: self.config.menu.clone(),
            tariffs: s.tariffs.clone(),
            total_payments: s.contracts.values().map(|c| c.price).sum(),
            settlement: s.realized.settlement(&s.tariffs, tau),
            operator_profit: s.cumulative_payments - s.cumulative_settlement,
            imported_kwh: s.realized.imported_kwh(tau),
            exported_kwh: s.realized.exported_kwh(tau),
            contracts: s.contracts.values().cloned().collect(),
            schedule: s.realized.clone(),
            quotes: self.quotes,
        })
    }
}

/// Everything a finished day produced.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DayResult {
    pub scenario_seed: Option<u64>,
    pub horizon_slots: usize,
    pub slot_hours: f64,
    pub menu: Vec<f64>,
    pub tariffs: TariffPair,
    pub quotes: Vec<Quote>,
    pub contracts: Vec<Contract>,
    /// Realized schedule over the whole day.
    pub schedule: Schedule,
    pub total_payments: f64,
    pub settlement: f64,
    pub operator_profit: f64,
    pub imported_kwh: f64,
    pub exported_kwh: f64,
}

impl DayResult {
    pub fn accepted(&self) -> usize {
        self.contracts.len()
    }

    pub fn payment_of(&self, id: EvId) -> Option<f64> {
        self.contracts
            .iter()
            .find(|c| c.ev_id == id)
            .map(|c| c.price)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Writes `quotes.csv`, `contracts.csv` and `schedule.csv` into `dir`.
    pub fn write_csvs(&self, dir: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(dir.join("quotes.csv"))?;
        w.write_record([
            "ev_id",
            "slot",
            "option_kwh",
            "feasible",
            "marginal_cost",
            "markup",
            "price",
            "utility",
            "profit",
            "selected",
        ])?;
        for q in &self.quotes {
            for (i, l) in q.options.iter().enumerate() {
                w.write_record([
                    q.ev_id.to_string(),
                    q.slot.to_string(),
                    l.option_kwh.to_string(),
                    l.feasible.to_string(),
                    l.marginal_cost.to_string(),
                    l.markup.to_string(),
                    l.price.to_string(),
                    l.utility.to_string(),
                    l.profit.to_string(),
                    (q.selected == Some(i)).to_string(),
                ])?;
            }
        }
        w.flush()
            .map_err(|e| Error::io(dir.join("quotes.csv"), e))?;

        let mut w = csv::Writer::from_path(dir.join("contracts.csv"))?;
        for c in &self.contracts {
            w.serialize(c)?;
        }
        if self.contracts.is_empty() {
            w.write_record([
                "ev_id",
                "accepted_option_kwh",
                "price",
                "acceptance_slot",
                "discharged_kwh",
                "residual_discharge_kwh",
            ])?;
        }
        w.flush()
            .map_err(|e| Error::io(dir.join("contracts.csv"), e))?;

        write_schedule_csv(&self.schedule, &dir.join("schedule.csv"))
    }
}

/// One row per EV and slot with nonzero flow, plus one lot row per slot with an
/// empty `ev_id` carrying totals and the grid flows.
pub fn write_schedule_csv(s: &Schedule, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "slot",
        "ev_id",
        "charge_kw",
        "discharge_kw",
        "import_kw",
        "export_kw",
    ])?;
    for k in 0..s.n_slots() {
        let slot = (s.start_slot + k).to_string();
        let (mut ch, mut dis) = (0.0, 0.0);
        for e in &s.evs {
            ch += e.charge_kw[k];
            dis += e.discharge_kw[k];
            if e.charge_kw[k] != 0.0 || e.discharge_kw[k] != 0.0 {
                w.write_record([
                    slot.clone(),
                    e.ev_id.to_string(),
                    e.charge_kw[k].to_string(),
                    e.discharge_kw[k].to_string(),
                    String::new(),
                    String::new(),
                ])?;
            }
        }
        w.write_record([
            slot,
            String::new(),
            ch.to_string(),
            dis.to_string(),
            s.import_kw[k].to_string(),
            s.export_kw[k].to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Runs the mechanism over a day of arrivals.
pub fn run_day(
    scenario: &FleetScenario,
    prices: &PriceSeries,
    config: &MechanismConfig,
    optimizer: &Optimizer,
) -> Result<DayResult> {
    if prices.len() != scenario.horizon_slots {
        return Err(Error::arg(format!(
            "price series has {} slots but the scenario has {}",
            prices.len(),
            scenario.horizon_slots
        )));
    }
    if (prices.slot_hours() - config.limits.slot_hours).abs() > 1e-12
        || (scenario.slot_hours - config.limits.slot_hours).abs() > 1e-12
    {
        return Err(Error::arg(
            "slot lengths of prices, scenario and lot limits differ",
        ));
    }
    scenario.validate()?;
    let mut mech = Mechanism::new(derive_tariffs(prices), config.clone(), optimizer.clone())?;
    let mut order: Vec<&EvProfile> = scenario.evs.iter().collect();
    order.sort_by_key(|e| (e.arrival_slot, e.id));
    for ev in order {
        let q = mech.process_arrival(ev)?;
        log::debug!(
            "slot {:>2} EV {:>3}: {} in {:.2}s",
            q.slot,
            q.ev_id,
            match q.selected_line() {
                Some(l) => format!("accepts d={} at {:.4}", l.option_kwh, l.price),
                None => format!("rejects ({:?})", q.rejection),
            },
            q.solve_seconds
        );
    }
    mech.finish(Some(scenario.seed))
}
