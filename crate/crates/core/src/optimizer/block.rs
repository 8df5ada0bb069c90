//! One copy of the lot scheduling constraints inside a [`Model`].

use crate::milp::{Cmp, LinExpr, Model, Solution, Var};
use crate::scenario::EvProfile;

use super::schedule::{recompute_soc, EvTrajectory, Schedule};
use super::{LotLimits, ScheduleProblemInput};

/// Powers below this are reported as exactly zero.
const ZERO_SNAP: f64 = 1e-9;

pub(crate) struct EvVars {
    pub profile: EvProfile,
    pub soc_start: f64,
    /// Relative slot of the first column.
    pub first: usize,
    pub charge: Vec<Var>,
    pub discharge: Vec<Var>,
}

/// Handles to the columns of one schedule block.
pub(crate) struct ScheduleBlock {
    pub start_slot: usize,
    pub n_slots: usize,
    pub evs: Vec<EvVars>,
    pub import: Vec<Var>,
    pub export: Vec<Var>,
    /// `τ · Σ (buy·P_imp − sell·P_exp)`.
    pub cost: LinExpr,
}

/// Adds the scheduling constraints for `input`'s active fleet plus an
/// optional `(candidate, discharge cap)` to `model`. Column names carry
/// `tag` so several blocks can share one model.
pub(crate) fn add_block(
    model: &mut Model,
    input: &ScheduleProblemInput,
    candidate: Option<(&EvProfile, f64)>,
    tag: &str,
    exclusivity: bool,
) -> ScheduleBlock {
    let lim = &input.limits;
    let start = input.tariffs.start_slot;
    let n = input.tariffs.len();
    let end = start + n;
    let tau = lim.slot_hours;

    let mut fleet: Vec<(EvProfile, f64, f64)> = input
        .active
        .iter()
        .map(|a| (a.profile.clone(), a.current_soc, a.residual_discharge_kwh))
        .collect();
    if let Some((ev, d)) = candidate {
        fleet.push((ev.clone(), ev.soc_initial, d));
    }
    fleet.sort_by_key(|(p, _, _)| p.id);

    let mut ch_by_slot: Vec<Vec<Var>> = vec![Vec::new(); n];
    let mut dis_by_slot: Vec<Vec<Var>> = vec![Vec::new(); n];
    let mut evs = Vec::with_capacity(fleet.len());

    for (profile, soc_start, budget) in fleet {
        let id = profile.id;
        let first_abs = profile.arrival_slot.max(start);
        let last_abs = profile.departure_slot.min(end);
        if first_abs >= last_abs {
            // No columns in the window; an unmet endpoint makes the block infeasible.
            if profile.departure_slot <= end && soc_start < profile.soc_final - 1e-9 {
                model.add_constraint(
                    format!("{tag}fin_e{id}"),
                    LinExpr::constant(soc_start),
                    Cmp::Ge,
                    profile.soc_final,
                );
            }
            evs.push(EvVars {
                profile,
                soc_start,
                first: 0,
                charge: Vec::new(),
                discharge: Vec::new(),
            });
            continue;
        }
        let first = first_abs - start;
        let len = last_abs - first_abs;
        let mut charge = Vec::with_capacity(len);
        let mut discharge = Vec::with_capacity(len);
        let mut prev_soc = LinExpr::constant(soc_start);
        let step = tau / profile.capacity_kwh;
        for k in 0..len {
            let t = first_abs + k;
            let c = model.add_continuous(format!("{tag}ch_e{id}_t{t}"), 0.0, lim.charger_kw);
            let d = model.add_continuous(format!("{tag}dis_e{id}_t{t}"), 0.0, lim.charger_kw);
            let s = model.add_continuous(format!("{tag}soc_e{id}_t{t}"), 0.0, 1.0);
            // s_t − s_{t−1} − τ/C (η_ch c − d/η_dis) = 0
            let mut row = LinExpr::from(s);
            row.add_expr(&prev_soc, -1.0);
            row.add(c, -step * lim.charge_efficiency);
            row.add(d, step / lim.discharge_efficiency);
            model.add_constraint(format!("{tag}soc_e{id}_t{t}"), row, Cmp::Eq, 0.0);
            if exclusivity {
                let v = model.add_binary(format!("{tag}mode_e{id}_t{t}"));
                model.add_constraint(
                    format!("{tag}chon_e{id}_t{t}"),
                    LinExpr::new().with(c, 1.0).with(v, -lim.charger_kw),
                    Cmp::Le,
                    0.0,
                );
                model.add_constraint(
                    format!("{tag}dison_e{id}_t{t}"),
                    LinExpr::new().with(d, 1.0).with(v, lim.charger_kw),
                    Cmp::Le,
                    lim.charger_kw,
                );
            }
            ch_by_slot[first + k].push(c);
            dis_by_slot[first + k].push(d);
            charge.push(c);
            discharge.push(d);
            prev_soc = LinExpr::from(s);
        }
        if profile.departure_slot <= end {
            model.add_constraint(
                format!("{tag}fin_e{id}"),
                prev_soc,
                Cmp::Ge,
                profile.soc_final,
            );
        }
        let mut cap = LinExpr::new();
        for &d in &discharge {
            cap.add(d, tau);
        }
        model.add_constraint(format!("{tag}cap_e{id}"), cap, Cmp::Le, budget.max(0.0));
        evs.push(EvVars {
            profile,
            soc_start,
            first,
            charge,
            discharge,
        });
    }

    let mut import = Vec::with_capacity(n);
    let mut export = Vec::with_capacity(n);
    let mut cost = LinExpr::new();
    for k in 0..n {
        let t = start + k;
        let imp = model.add_continuous(format!("{tag}imp_t{t}"), 0.0, lim.feeder_kw);
        let exp = model.add_continuous(format!("{tag}exp_t{t}"), 0.0, lim.feeder_kw);
        let mut bal = LinExpr::new().with(imp, 1.0).with(exp, -1.0);
        for &c in &ch_by_slot[k] {
            bal.add(c, -1.0);
        }
        for &d in &dis_by_slot[k] {
            bal.add(d, 1.0);
        }
        model.add_constraint(format!("{tag}bal_t{t}"), bal, Cmp::Eq, 0.0);
        if exclusivity {
            let u = model.add_binary(format!("{tag}dir_t{t}"));
            model.add_constraint(
                format!("{tag}impon_t{t}"),
                LinExpr::new().with(imp, 1.0).with(u, -lim.feeder_kw),
                Cmp::Le,
                0.0,
            );
            model.add_constraint(
                format!("{tag}expon_t{t}"),
                LinExpr::new().with(exp, 1.0).with(u, lim.feeder_kw),
                Cmp::Le,
                lim.feeder_kw,
            );
        }
        cost.add(imp, tau * input.tariffs.buy[k]);
        cost.add(exp, -tau * input.tariffs.sell[k]);
        import.push(imp);
        export.push(exp);
    }

    ScheduleBlock {
        start_slot: start,
        n_slots: n,
        evs,
        import,
        export,
        cost,
    }
}

impl ScheduleBlock {
    /// Whether the solution charges and discharges one EV, or imports and
    /// exports, in the same slot.
    pub fn has_simultaneous_flows(&self, sol: &Solution, tol: f64) -> bool {
        let lot = self
            .import
            .iter()
            .zip(&self.export)
            .any(|(&i, &e)| sol.value(i).min(sol.value(e)) > tol);
        lot || self.evs.iter().any(|ev| {
            ev.charge
                .iter()
                .zip(&ev.discharge)
                .any(|(&c, &d)| sol.value(c).min(sol.value(d)) > tol)
        })
    }

    /// Reads the block's schedule. Tiny powers are snapped to zero, SoC is
    /// recomputed from the powers and lot flows from the net load.
    pub fn extract(&self, sol: &Solution, limits: &LotLimits) -> Schedule {
        let snap = |x: f64| {
            if x.abs() < ZERO_SNAP {
                0.0
            } else {
                x.clamp(0.0, limits.charger_kw)
            }
        };
        let mut sched = Schedule::empty(self.start_slot, self.n_slots);
        for ev in &self.evs {
            let mut traj = EvTrajectory::idle(ev.profile.id, ev.soc_start, self.n_slots);
            for (k, (&c, &d)) in ev.charge.iter().zip(&ev.discharge).enumerate() {
                traj.charge_kw[ev.first + k] = snap(sol.value(c));
                traj.discharge_kw[ev.first + k] = snap(sol.value(d));
            }
            recompute_soc(&mut traj, &ev.profile, limits);
            sched.upsert(traj);
        }
        sched.rebalance();
        sched
    }
}
