use highs::{HighsModelStatus, RowProblem};

use super::{Cmp, MilpBackend, Model, Sense, Solution, SolveOptions, SolveStatus, VarKind};

/// HiGHS through the `highs` crate. No native indicator rows.
#[derive(Clone, Copy, Debug, Default)]
pub struct HighsBackend;

impl MilpBackend for HighsBackend {
    fn name(&self) -> &'static str {
        "highs"
    }

    fn solve_model(&self, model: &Model, opts: &SolveOptions) -> Solution {
        assert!(
            model.indicators().is_empty(),
            "HiGHS backend received indicator rows; lower them first"
        );
        if model.vars().is_empty() {
            return trivial(model);
        }

        let mut pb = RowProblem::default();
        let mut cost = vec![0.0; model.vars().len()];
        for (v, c) in model.objective().merged_terms() {
            cost[v.index()] = c;
        }
        let cols: Vec<_> = model
            .vars()
            .iter()
            .zip(&cost)
            .map(|(def, &c)| match def.kind {
                VarKind::Continuous => pb.add_column(c, def.lower..=def.upper),
                VarKind::Binary => pb.add_integer_column(c, def.lower..=def.upper),
            })
            .collect();
        for row in model.constraints() {
            let shift = row.expr.constant_term();
            let factors: Vec<_> = row
                .expr
                .merged_terms()
                .into_iter()
                .map(|(v, c)| (cols[v.index()], c))
                .collect();
            let rhs = row.rhs - shift;
            if factors.is_empty() {
                let ok = match row.cmp {
                    Cmp::Le => 0.0 <= rhs + opts.feasibility_tol,
                    Cmp::Ge => 0.0 >= rhs - opts.feasibility_tol,
                    Cmp::Eq => rhs.abs() <= opts.feasibility_tol,
                };
                if !ok {
                    return Solution::failed(SolveStatus::Infeasible);
                }
                continue;
            }
            match row.cmp {
                Cmp::Le => pb.add_row(..=rhs, factors),
                Cmp::Ge => pb.add_row(rhs.., factors),
                Cmp::Eq => pb.add_row(rhs..=rhs, factors),
            };
        }

        let sense = match model.sense() {
            Sense::Minimize => highs::Sense::Minimise,
            Sense::Maximize => highs::Sense::Maximise,
        };
        let mut hm = pb.optimise(sense);
        hm.make_quiet();
        hm.set_option("threads", opts.threads.max(1) as i32);
        hm.set_option("random_seed", opts.seed as i32);
        hm.set_option("primal_feasibility_tolerance", opts.feasibility_tol);
        hm.set_option("dual_feasibility_tolerance", opts.feasibility_tol);
        if model.num_binaries() > 0 {
            hm.set_option("mip_rel_gap", opts.mip_rel_gap);
            hm.set_option("mip_feasibility_tolerance", opts.feasibility_tol);
        }
        if let Some(limit) = opts.time_limit_s {
            hm.set_option("time_limit", limit);
        }

        let solved = match hm.try_solve() {
            Ok(s) => s,
            Err(e) => {
                log::warn!("{}: HiGHS run failed: {e:?}", model.name);
                return Solution::failed(SolveStatus::Failed);
            }
        };
        let status = match solved.status() {
            HighsModelStatus::Optimal => SolveStatus::Optimal,
            HighsModelStatus::Infeasible | HighsModelStatus::UnboundedOrInfeasible => {
                SolveStatus::Infeasible
            }
            HighsModelStatus::ReachedTimeLimit
            | HighsModelStatus::ReachedIterationLimit
            | HighsModelStatus::ReachedSolutionLimit
            | HighsModelStatus::ReachedInterrupt
            | HighsModelStatus::ReachedMemoryLimit => SolveStatus::Limit,
            other => {
                log::warn!("{}: HiGHS status {other:?}", model.name);
                SolveStatus::Failed
            }
        };
        if status != SolveStatus::Optimal {
            return Solution::failed(status);
        }
        let values = solved.get_solution().columns().to_vec();
        let objective = model.objective().eval(&values);
        Solution {
            status,
            objective,
            values,
        }
    }
}

fn trivial(model: &Model) -> Solution {
    for row in model.constraints() {
        let lhs = row.expr.constant_term();
        let ok = match row.cmp {
            Cmp::Le => lhs <= row.rhs,
            Cmp::Ge => lhs >= row.rhs,
            Cmp::Eq => lhs == row.rhs,
        };
        if !ok {
            return Solution::failed(SolveStatus::Infeasible);
        }
    }
    Solution {
        status: SolveStatus::Optimal,
        objective: model.objective().constant_term(),
        values: Vec::new(),
    }
}
