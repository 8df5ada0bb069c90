use serde::Serialize;

use crate::error::Result;
use crate::milp::{Model, Sense, SolveStatus};

use super::block::{add_block, ScheduleBlock};
use super::{Optimizer, Schedule, ScheduleProblemInput, SIMULTANEITY_TOL};

/// Minimum-settlement-cost scheduling model.
pub struct CostProblem {
    pub model: Model,
    pub(crate) block: ScheduleBlock,
}

#[derive(Clone, Debug, Serialize)]
pub struct CostSolve {
    /// Settlement of `schedule`; NaN unless optimal.
    pub optimal_cost: f64,
    pub schedule: Option<Schedule>,
    pub status: SolveStatus,
}

impl CostSolve {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

/// Builds the cost model for `input`, with exclusivity binaries when
/// `binaries` is set.
pub fn build_cost_problem(input: &ScheduleProblemInput, binaries: bool) -> Result<CostProblem> {
    input.validate()?;
    let mut model = Model::new("cost");
    let candidate = input.candidate.as_ref().map(|c| (&c.profile, c.option_kwh));
    let block = add_block(&mut model, input, candidate, "", binaries);
    model.set_objective(Sense::Minimize, block.cost.clone());
    Ok(CostProblem { model, block })
}

/// Minimum settlement cost of serving `input`'s fleet (and candidate).
pub fn solve_cost(opt: &Optimizer, input: &ScheduleProblemInput) -> Result<CostSolve> {
    let mut binaries = opt.start_with_binaries();
    loop {
        let problem = build_cost_problem(input, binaries)?;
        let sol = opt.solve(&problem.model)?;
        if !sol.is_optimal() {
            return Ok(CostSolve {
                optimal_cost: f64::NAN,
                schedule: None,
                status: sol.status,
            });
        }
        if !binaries
            && opt.needs_binaries(input)
            && problem.block.has_simultaneous_flows(&sol, SIMULTANEITY_TOL)
        {
            log::debug!("cost: simultaneous flows in relaxation; re-solving with binaries");
            binaries = true;
            continue;
        }
        let schedule = problem.block.extract(&sol, &input.limits);
        return Ok(CostSolve {
            optimal_cost: schedule.settlement(&input.tariffs, input.limits.slot_hours),
            schedule: Some(schedule),
            status: sol.status,
        });
    }
}
