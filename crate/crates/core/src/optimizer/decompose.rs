use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::milp::SolveStatus;
use crate::scenario::EvProfile;

use super::cost::solve_cost;
use super::menu::{check_menu, conclude, price_option, MenuSolve, OptionQuote, Rejection};
use super::{Candidate, Optimizer, ScheduleProblemInput};

/// Prices each option by its own cost solve: `mc_d = C*(fleet + EV, d) − C*`
/// and the markup that drives the EV's utility to zero. Up to `threads`
/// options are solved concurrently.
pub fn decompose_and_price(
    opt: &Optimizer,
    input: &ScheduleProblemInput,
    menu: &[f64],
    arriving: &EvProfile,
    baseline_cost: f64,
    threads: usize,
) -> Result<MenuSolve> {
    check_menu(menu)?;
    if arriving.arrival_slot < input.tariffs.start_slot {
        return Err(Error::arg(format!(
            "EV {} arrives at slot {} before the horizon start {}",
            arriving.id, arriving.arrival_slot, input.tariffs.start_slot
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
    let price_one = |d: f64| -> Result<OptionQuote> {
        let mut with = input.clone();
        with.candidate = Some(Candidate {
            profile: arriving.clone(),
            option_kwh: d,
        });
        let solved = solve_cost(opt, &with)?;
        match solved.status {
            SolveStatus::Optimal => Ok(price_option(
                arriving,
                d,
                solved.optimal_cost,
                baseline_cost,
                solved.schedule,
            )),
            SolveStatus::Infeasible => Ok(OptionQuote::infeasible(d)),
            s => Err(Error::Solver(format!("option {d} ended with status {s:?}"))),
        }
    };
    let quotes: Vec<OptionQuote> = if threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Solver(e.to_string()))?;
        pool.install(|| {
            menu.par_iter()
                .map(|&d| price_one(d))
                .collect::<Result<_>>()
        })?
    } else {
        menu.iter().map(|&d| price_one(d)).collect::<Result<_>>()?
    };
    Ok(conclude(baseline_cost, quotes, SolveStatus::Optimal))
}
