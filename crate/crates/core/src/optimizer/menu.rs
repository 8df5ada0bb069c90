use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::milp::{Cmp, LinExpr, Model, Sense, Solution, SolveStatus, Var};
use crate::scenario::EvProfile;

use super::block::{add_block, ScheduleBlock};
use super::cost::solve_cost;
use super::{Candidate, Optimizer, Schedule, ScheduleProblemInput, SIMULTANEITY_TOL};

/// Weight of the per-option settlement costs in the menu objective.
pub const COST_WEIGHT: f64 = 1e-6;
/// Utilities at or above `-UTILITY_TOL` count as acceptable, and
/// utilities within it of each other are tied.
pub const UTILITY_TOL: f64 = 1e-9;
/// Operator profits within this of each other are tied.
pub const PROFIT_TOL: f64 = 1e-7;

/// Pricing outcome for one menu option.
#[derive(Clone, Debug, Serialize)]
pub struct OptionQuote {
    pub option_kwh: f64,
    pub feasible: bool,
    /// Minimum settlement with the arriving EV on this option (C_d).
    pub settlement_cost: f64,
    pub marginal_cost: f64,
    pub markup: f64,
    pub price: f64,
    /// EV utility at `price`.
    pub utility: f64,
    /// Operator profit relative to not serving the EV.
    pub profit: f64,
    #[serde(skip)]
    pub schedule: Option<Schedule>,
}

impl OptionQuote {
    pub(crate) fn infeasible(option_kwh: f64) -> Self {
        Self {
            option_kwh,
            feasible: false,
            settlement_cost: f64::NAN,
            marginal_cost: f64::NAN,
            markup: f64::NAN,
            price: f64::NAN,
            utility: f64::NEG_INFINITY,
            profit: f64::NAN,
            schedule: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rejection {
    /// Every feasible option leaves the EV with negative utility.
    NegativeUtility,
    /// The EV cannot be served under any option.
    Infeasible,
    /// The EV's stay does not overlap the remaining horizon.
    NoOverlap,
}

#[derive(Clone, Debug, Serialize)]
pub struct MenuSolve {
    pub baseline_cost: f64,
    pub options: Vec<OptionQuote>,
    /// Index into `options`.
    pub selected: Option<usize>,
    /// φ^s: profit of the selected option, 0 on rejection.
    pub realized_profit: f64,
    /// λ: the EV's best attainable utility, floored at 0.
    pub dual_value: f64,
    pub status: SolveStatus,
    pub rejection: Option<Rejection>,
}

impl MenuSolve {
    pub fn selected_quote(&self) -> Option<&OptionQuote> {
        self.selected.map(|i| &self.options[i])
    }

    pub fn selected_option_kwh(&self) -> Option<f64> {
        self.selected_quote().map(|q| q.option_kwh)
    }

    pub(crate) fn rejected(baseline_cost: f64, options: Vec<OptionQuote>, why: Rejection) -> Self {
        Self {
            baseline_cost,
            options,
            selected: None,
            realized_profit: 0.0,
            dual_value: 0.0,
            status: SolveStatus::Optimal,
            rejection: Some(why),
        }
    }
}

/// Index of the option an EV picks: maximal utility among those with
/// `U ≥ 0`; ties go to the highest operator profit, then the largest
/// option, then the lowest index. Items are `(option_kwh, utility, profit)`.
pub fn preferred_option(items: &[(f64, f64, f64)]) -> Option<usize> {
    let ok: Vec<usize> = (0..items.len())
        .filter(|&i| items[i].1 >= -UTILITY_TOL)
        .collect();
    let best_u = ok
        .iter()
        .map(|&i| items[i].1)
        .fold(f64::NEG_INFINITY, f64::max);
    let tied: Vec<usize> = ok
        .into_iter()
        .filter(|&i| items[i].1 >= best_u - UTILITY_TOL)
        .collect();
    let best_phi = tied
        .iter()
        .map(|&i| items[i].2)
        .fold(f64::NEG_INFINITY, f64::max);
    tied.into_iter()
        .filter(|&i| items[i].2 >= best_phi - PROFIT_TOL)
        .fold(None, |acc: Option<usize>, i| match acc {
            Some(j) if items[j].0 >= items[i].0 => Some(j),
            _ => Some(i),
        })
}

/// `α·ΔE·C` for the EV.
pub(crate) fn charge_value(ev: &EvProfile) -> f64 {
    ev.charge_value()
}

/// Quote for option `d` given its minimum settlement `cost`, priced at
/// marginal cost plus the largest markup the EV accepts.
pub(crate) fn price_option(
    ev: &EvProfile,
    d: f64,
    cost: f64,
    baseline: f64,
    schedule: Option<Schedule>,
) -> OptionQuote {
    let mc = cost - baseline;
    let u0 = charge_value(ev) - mc - ev.degradation_per_kwh * d;
    let markup = u0.max(0.0);
    let price = mc + markup;
    OptionQuote {
        option_kwh: d,
        feasible: true,
        settlement_cost: cost,
        marginal_cost: mc,
        markup,
        price,
        utility: charge_value(ev) - price - ev.degradation_per_kwh * d,
        profit: markup,
        schedule,
    }
}

/// Applies the EV's choice to priced options.
pub(crate) fn conclude(baseline: f64, options: Vec<OptionQuote>, status: SolveStatus) -> MenuSolve {
    if !options.iter().any(|o| o.feasible) {
        return MenuSolve::rejected(baseline, options, Rejection::Infeasible);
    }
    // Options with U > 0 at zero markup keep U = 0 after pricing, so the
    // pick is by utility before markup.
    let items: Vec<(f64, f64, f64)> = options
        .iter()
        .map(|o| (o.option_kwh, o.utility, o.profit))
        .collect();
    match preferred_option(&items) {
        None => MenuSolve::rejected(baseline, options, Rejection::NegativeUtility),
        Some(i) => {
            let dual = options
                .iter()
                .filter(|o| o.feasible)
                .map(|o| o.utility)
                .fold(0.0, f64::max);
            MenuSolve {
                baseline_cost: baseline,
                realized_profit: options[i].profit,
                options,
                selected: Some(i),
                dual_value: dual,
                status,
                rejection: None,
            }
        }
    }
}

pub(crate) fn check_menu(menu: &[f64]) -> Result<()> {
    if menu.is_empty() {
        return Err(Error::arg("menu is empty"));
    }
    for (i, &d) in menu.iter().enumerate() {
        if !(d >= 0.0 && d.is_finite()) {
            return Err(Error::arg(format!(
                "menu option {d} must be finite and >= 0"
            )));
        }
        if menu[..i].contains(&d) {
            return Err(Error::arg(format!("duplicate menu option {d}")));
        }
    }
    Ok(())
}

/// Single-level menu pricing model.
pub struct MenuProblem {
    pub model: Model,
    pub(crate) blocks: Vec<ScheduleBlock>,
    pub menu: Vec<f64>,
    pub baseline_cost: f64,
    cost: Vec<Var>,
    select: Vec<Var>,
    phi: Var,
}

/// Builds the menu MILP: one schedule block per option, the EV's
/// rationality written through its dual value λ, and indicator rows tying
/// the selection to prices and profit. `cost_range`, when known, bounds
/// every option's minimum settlement and tightens the big-M constants.
pub fn build_menu_milp(
    input: &ScheduleProblemInput,
    menu: &[f64],
    arriving: &EvProfile,
    baseline_cost: f64,
    binaries: bool,
    cost_range: Option<(f64, f64)>,
) -> Result<MenuProblem> {
    check_menu(menu)?;
    input.validate()?;
    let mut model = Model::new(format!("menu_e{}", arriving.id));
    let value = charge_value(arriving);

    let mut blocks = Vec::with_capacity(menu.len());
    let mut cost = Vec::with_capacity(menu.len());
    let mut cost_lo = f64::INFINITY;
    for (k, &d) in menu.iter().enumerate() {
        let block = add_block(
            &mut model,
            input,
            Some((arriving, d)),
            &format!("o{k}_"),
            binaries,
        );
        let (mut lo, mut hi) = model.expr_bounds(&block.cost);
        if let Some((a, b)) = cost_range {
            lo = lo.max(a);
            hi = hi.min(b);
        }
        cost_lo = cost_lo.min(lo);
        let c = model.add_continuous(format!("cost_o{k}"), lo, hi);
        let mut row = LinExpr::from(c);
        row.add_expr(&block.cost, -1.0);
        model.add_constraint(format!("costdef_o{k}"), row, Cmp::Eq, 0.0);
        cost.push(c);
        blocks.push(block);
    }

    // Largest useful markup and utility: V − (C_lo − C*).
    let m_beta = (value + baseline_cost - cost_lo).max(0.0);
    let lambda = model.add_continuous("lambda", 0.0, m_beta);
    let phi = model.add_continuous("phi_s", 0.0, m_beta);
    let reject = model.add_binary("reject");
    let mut pick_one = LinExpr::from(reject);
    let mut select = Vec::with_capacity(menu.len());
    let mut objective = LinExpr::from(phi);

    for (k, &d) in menu.iter().enumerate() {
        let beta = model.add_continuous(format!("beta_o{k}"), 0.0, m_beta);
        let z = model.add_binary(format!("z_o{k}"));
        // U = V − (C_d − C*) − β − γd
        let utility = LinExpr::constant(value + baseline_cost - arriving.degradation_per_kwh * d)
            .with(cost[k], -1.0)
            .with(beta, -1.0);
        let mut dual_ge = LinExpr::from(lambda);
        dual_ge.add_expr(&utility, -1.0);
        model.add_constraint(format!("dual_o{k}"), dual_ge.clone(), Cmp::Ge, 0.0);
        model.add_indicator(format!("slack_o{k}"), z, true, dual_ge, Cmp::Le, 0.0);
        model.add_indicator(format!("accept_o{k}"), z, true, utility, Cmp::Ge, 0.0);
        model.add_indicator(
            format!("profit_o{k}"),
            z,
            true,
            LinExpr::from(phi).with(beta, -1.0),
            Cmp::Le,
            0.0,
        );
        pick_one.add(z, 1.0);
        objective.add(cost[k], -COST_WEIGHT);
        select.push(z);
    }
    model.add_constraint("select", pick_one, Cmp::Eq, 1.0);
    model.add_indicator(
        "reject_dual",
        reject,
        true,
        LinExpr::from(lambda),
        Cmp::Le,
        0.0,
    );
    model.add_indicator(
        "reject_profit",
        reject,
        true,
        LinExpr::from(phi),
        Cmp::Le,
        0.0,
    );
    model.set_objective(Sense::Maximize, objective);

    Ok(MenuProblem {
        model,
        blocks,
        menu: menu.to_vec(),
        baseline_cost,
        cost,
        select,
        phi,
    })
}

impl MenuProblem {
    fn quotes(
        &self,
        sol: &Solution,
        input: &ScheduleProblemInput,
        arriving: &EvProfile,
    ) -> Vec<OptionQuote> {
        self.menu
            .iter()
            .zip(&self.blocks)
            .map(|(&d, block)| {
                let sched = block.extract(sol, &input.limits);
                let c = sched.settlement(&input.tariffs, input.limits.slot_hours);
                price_option(arriving, d, c, self.baseline_cost, Some(sched))
            })
            .collect()
    }
}

/// Prices `menu` for `arriving` on top of `input`'s fleet. `baseline_cost`
/// is the minimum settlement of the fleet alone on the same tariffs.
pub fn solve_menu(
    opt: &Optimizer,
    input: &ScheduleProblemInput,
    menu: &[f64],
    arriving: &EvProfile,
    baseline_cost: f64,
) -> Result<MenuSolve> {
    check_menu(menu)?;
    let start = input.tariffs.start_slot;
    if arriving.arrival_slot < start {
        return Err(Error::arg(format!(
            "EV {} arrives at slot {} before the horizon start {start}",
            arriving.id, arriving.arrival_slot
        )));
    }
    if arriving.arrival_slot >= input.tariffs.end_slot()
        || arriving.departure_slot <= arriving.arrival_slot
    {
        let options = menu.iter().map(|&d| OptionQuote::infeasible(d)).collect();
        return Ok(MenuSolve::rejected(
            baseline_cost,
            options,
            Rejection::NoOverlap,
        ));
    }

    let mut offered: Vec<f64> = menu.to_vec();
    let mut range = cost_range(opt, input, &offered, arriving)?;
    if range.is_none() {
        offered = screen_options(opt, input, menu, arriving)?;
        if offered.is_empty() {
            let options = menu.iter().map(|&d| OptionQuote::infeasible(d)).collect();
            return Ok(MenuSolve::rejected(
                baseline_cost,
                options,
                Rejection::Infeasible,
            ));
        }
        range = cost_range(opt, input, &offered, arriving)?;
    }
    let mut binaries = opt.start_with_binaries();
    loop {
        let problem = build_menu_milp(input, &offered, arriving, baseline_cost, binaries, range)?;
        let sol = opt.solve(&problem.model)?;
        match sol.status {
            SolveStatus::Optimal => {}
            SolveStatus::Infeasible if offered.len() == menu.len() => {
                // Some options cannot be served; price only the others.
                offered = screen_options(opt, input, menu, arriving)?;
                if offered.is_empty() {
                    let options = menu.iter().map(|&d| OptionQuote::infeasible(d)).collect();
                    return Ok(MenuSolve::rejected(
                        baseline_cost,
                        options,
                        Rejection::Infeasible,
                    ));
                }
                continue;
            }
            status => {
                return Err(Error::Solver(format!(
                    "menu MILP for EV {} ended with status {status:?}",
                    arriving.id
                )))
            }
        }
        if !binaries
            && opt.needs_binaries(input)
            && problem
                .blocks
                .iter()
                .any(|b| b.has_simultaneous_flows(&sol, SIMULTANEITY_TOL))
        {
            log::debug!("menu: simultaneous flows in relaxation; re-solving with binaries");
            binaries = true;
            continue;
        }
        let mut priced = problem.quotes(&sol, input, arriving);
        let options: Vec<OptionQuote> = menu
            .iter()
            .map(|&d| match offered.iter().position(|&o| o == d) {
                Some(k) => std::mem::replace(&mut priced[k], OptionQuote::infeasible(d)),
                None => OptionQuote::infeasible(d),
            })
            .collect();
        let out = conclude(baseline_cost, options, sol.status);
        let milp_phi = sol.value(problem.phi);
        if (milp_phi - out.realized_profit).abs() > 1e-6 * (1.0 + milp_phi.abs()) {
            log::warn!(
                "menu for EV {}: MILP profit {milp_phi} differs from priced profit {}",
                arriving.id,
                out.realized_profit
            );
        }
        let chosen = problem.select.iter().position(|&z| sol.value(z) > 0.5);
        log::trace!(
            "menu for EV {}: MILP chose {:?}, normalized {:?}, costs {:?}",
            arriving.id,
            chosen.map(|k| offered[k]),
            out.selected_option_kwh(),
            problem
                .cost
                .iter()
                .map(|&c| sol.value(c))
                .collect::<Vec<_>>()
        );
        return Ok(out);
    }
}

/// Minimum settlement with the arriving EV at the largest and smallest
/// offered option. Relaxing the discharge cap never raises the minimum, so
/// these bound every option's cost. `None` when either is infeasible.
fn cost_range(
    opt: &Optimizer,
    input: &ScheduleProblemInput,
    offered: &[f64],
    arriving: &EvProfile,
) -> Result<Option<(f64, f64)>> {
    let lo_d = offered.iter().copied().fold(f64::INFINITY, f64::min);
    let hi_d = offered.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = [0.0; 2];
    for (slot, d) in out.iter_mut().zip([hi_d, lo_d]) {
        let mut with = input.clone();
        with.candidate = Some(Candidate {
            profile: arriving.clone(),
            option_kwh: d,
        });
        let c = solve_cost(opt, &with)?;
        if !c.is_optimal() {
            return Ok(None);
        }
        *slot = c.optimal_cost;
    }
    let pad = |c: f64| 1e-6 * (1.0 + c.abs());
    Ok(Some((out[0] - pad(out[0]), out[1] + pad(out[1]))))
}

/// Options under which the fleet plus the arriving EV is schedulable.
fn screen_options(
    opt: &Optimizer,
    input: &ScheduleProblemInput,
    menu: &[f64],
    arriving: &EvProfile,
) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for &d in menu {
        let mut with = input.clone();
        with.candidate = Some(Candidate {
            profile: arriving.clone(),
            option_kwh: d,
        });
        match solve_cost(opt, &with)?.status {
            SolveStatus::Optimal => out.push(d),
            SolveStatus::Infeasible => {}
            s => {
                return Err(Error::Solver(format!(
                    "screening option {d} ended with status {s:?}"
                )))
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::test_util::*;
    use crate::optimizer::{decompose_and_price, verify_schedule, ActiveEv, Tolerances};

    fn peaky() -> ScheduleProblemInput {
        ScheduleProblemInput {
            tariffs: tariffs(0, &[0.08, 0.06, 0.10, 0.45, 0.50, 0.20], 0.02),
            active: vec![],
            candidate: None,
            limits: limits(200.0, 0.9f64.sqrt()),
        }
    }

    #[test]
    fn menu_validation() {
        let inp = peaky();
        let e = ev(1, 0, 6, 0.3, 0.8);
        assert!(matches!(
            build_menu_milp(&inp, &[], &e, 0.0, false, None),
            Err(Error::Argument(_))
        ));
        assert!(matches!(
            build_menu_milp(&inp, &[0.0, 5.0, 0.0], &e, 0.0, false, None),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn builds_one_block_per_option() {
        let menu: Vec<f64> = (0..=10).map(|k| 5.0 * k as f64).collect();
        let p = build_menu_milp(&peaky(), &menu, &ev(1, 0, 6, 0.3, 0.8), 0.0, false, None).unwrap();
        assert_eq!(p.blocks.len(), 11);
        assert_eq!(p.model.num_binaries(), 12);
    }

    #[test]
    fn single_option_is_charge_only() {
        let inp = peaky();
        let e = ev(1, 0, 6, 0.3, 0.8);
        let s = solve_menu(&Optimizer::default(), &inp, &[0.0], &e, 0.0).unwrap();
        let q = s.selected_quote().expect("accepted");
        assert_eq!(q.option_kwh, 0.0);
        assert!(q.utility.abs() < 1e-9);
        assert!((q.price - e.charge_value()).abs() < 1e-9);
        assert!(s.dual_value.abs() < 1e-12);
    }

    #[test]
    fn unprofitable_ev_is_rejected() {
        let mut inp = peaky();
        inp.tariffs = tariffs(0, &[0.9; 6], 0.02);
        let e = ev(1, 0, 6, 0.3, 0.8);
        for s in [
            solve_menu(&Optimizer::default(), &inp, &[0.0, 10.0], &e, 0.0).unwrap(),
            decompose_and_price(&Optimizer::default(), &inp, &[0.0, 10.0], &e, 0.0, 1).unwrap(),
        ] {
            assert_eq!(s.rejection, Some(Rejection::NegativeUtility));
            assert_eq!(s.realized_profit, 0.0);
            assert_eq!(s.dual_value, 0.0);
        }
    }

    #[test]
    fn no_overlap_is_rejected() {
        let mut inp = peaky();
        inp.tariffs = tariffs(2, &[0.1, 0.1], 0.0);
        let s = solve_menu(
            &Optimizer::default(),
            &inp,
            &[0.0],
            &ev(1, 4, 5, 0.3, 0.4),
            0.0,
        )
        .unwrap();
        assert_eq!(s.rejection, Some(Rejection::NoOverlap));
        let early = solve_menu(
            &Optimizer::default(),
            &inp,
            &[0.0],
            &ev(1, 1, 3, 0.3, 0.4),
            0.0,
        );
        assert!(matches!(early, Err(Error::Argument(_))));
    }

    #[test]
    fn unservable_ev_is_rejected_as_infeasible() {
        let mut inp = peaky();
        inp.tariffs = tariffs(0, &[0.1, 0.1], 0.02);
        inp.limits.feeder_kw = 30.0;
        inp.limits.charge_efficiency = 1.0;
        inp.limits.discharge_efficiency = 1.0;
        // 30 kWh within one hour needs the whole 30 kW feeder.
        let e = ev(2, 0, 2, 0.3, 0.8);
        let opt = Optimizer::default();
        let s = solve_menu(&opt, &inp, &[0.0, 10.0], &e, 0.0).unwrap();
        assert!(s.selected.is_some(), "{s:?}");

        inp.limits.feeder_kw = 20.0;
        let s = solve_menu(&opt, &inp, &[0.0, 10.0], &e, 0.0).unwrap();
        assert_eq!(s.rejection, Some(Rejection::Infeasible));
        assert!(s.options.iter().all(|o| !o.feasible));
        let d = decompose_and_price(&opt, &inp, &[0.0, 10.0], &e, 0.0, 1).unwrap();
        assert_eq!(d.rejection, Some(Rejection::Infeasible));
    }

    #[test]
    fn selected_schedule_is_feasible() {
        let mut inp = peaky();
        inp.active.push(ActiveEv {
            profile: ev(7, 0, 5, 0.4, 0.9),
            current_soc: 0.4,
            residual_discharge_kwh: 10.0,
        });
        let opt = Optimizer::default();
        let base = solve_cost(&opt, &inp).unwrap().optimal_cost;
        let e = ev(8, 1, 6, 0.2, 0.7);
        let s = solve_menu(&opt, &inp, &[0.0, 10.0, 20.0], &e, base).unwrap();
        let q = s.selected_quote().unwrap();
        let mut with = inp.clone();
        with.candidate = Some(Candidate {
            profile: e.clone(),
            option_kwh: q.option_kwh,
        });
        let v = verify_schedule(
            q.schedule.as_ref().unwrap(),
            &with.requirements(),
            &inp.limits,
            Tolerances::default(),
        );
        assert!(v.is_empty(), "{v:?}");
        // KKT: λ = max(0, max U) and the selection attains it.
        let max_u = s.options.iter().map(|o| o.utility).fold(0.0, f64::max);
        assert!((s.dual_value - max_u).abs() < 1e-9);
        assert!((q.utility - s.dual_value).abs() < 1e-9);
        assert!(s.options.iter().all(|o| !o.feasible || o.markup >= 0.0));
    }

    #[test]
    fn preferred_option_tie_order() {
        assert_eq!(
            preferred_option(&[(0.0, 1.0, 0.0), (10.0, 2.0, 0.0)]),
            Some(1)
        );
        assert_eq!(
            preferred_option(&[(0.0, -1.0, 0.0), (10.0, -2.0, 0.0)]),
            None
        );
        assert_eq!(
            preferred_option(&[(0.0, 1.0, 2.0), (10.0, 1.0, 5.0)]),
            Some(1)
        );
        assert_eq!(
            preferred_option(&[(0.0, 1.0, 5.0), (10.0, 1.0, 2.0)]),
            Some(0)
        );
        assert_eq!(
            preferred_option(&[(0.0, 0.0, 5.0), (10.0, 0.0, 5.0)]),
            Some(1)
        );
        assert_eq!(
            preferred_option(&[(5.0, 0.0, 1.0), (5.0, 0.0, 1.0)]),
            Some(0)
        );
    }
}
