//! Independent checker for the physical schedule invariants.

use std::fmt;

use serde::Serialize;

use crate::scenario::{EvId, EvProfile};

use super::schedule::{soc_step, Schedule};
use super::LotLimits;

/// What a schedule is checked against for one EV.
#[derive(Clone, Debug)]
pub struct EvRequirement {
    pub profile: EvProfile,
    /// SoC at the start of the schedule window (the initial SoC for EVs
    /// arriving inside the window).
    pub soc_start: f64,
    /// Maximum energy the EV may export within the window.
    pub discharge_cap_kwh: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    MissingTrajectory,
    UnknownTrajectory,
    SocStart,
    SocRecursion,
    SocBounds,
    Endpoint,
    DischargeCap,
    ChargerBound,
    Presence,
    EvExclusivity,
    FeederBound,
    LotExclusivity,
    PowerBalance,
}

#[derive(Clone, Debug, Serialize)]
pub struct Violation {
    pub rule: Rule,
    pub ev_id: Option<EvId>,
    pub slot: Option<usize>,
    pub amount: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.rule)?;
        if let Some(id) = self.ev_id {
            write!(f, " ev={id}")?;
        }
        if let Some(t) = self.slot {
            write!(f, " slot={t}")?;
        }
        write!(f, " by {:.3e}", self.amount)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Tolerances {
    /// SoC recursion and power balance.
    pub equality: f64,
    /// Power bounds, endpoints, discharge caps, exclusivity.
    pub bound: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            equality: 1e-9,
            bound: 1e-6,
        }
    }
}

/// Returns every violated invariant; an empty vector means feasible.
pub fn verify_schedule(
    schedule: &Schedule,
    reqs: &[EvRequirement],
    limits: &LotLimits,
    tol: Tolerances,
) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |rule, ev_id, slot, amount| {
        out.push(Violation {
            rule,
            ev_id,
            slot,
            amount,
        })
    };
    let start = schedule.start_slot;
    let n = schedule.n_slots();
    let mut charge = vec![0.0; n];
    let mut discharge = vec![0.0; n];

    for traj in &schedule.evs {
        if !reqs.iter().any(|r| r.profile.id == traj.ev_id) {
            push(Rule::UnknownTrajectory, Some(traj.ev_id), None, 0.0);
        }
    }

    for req in reqs {
        let ev = &req.profile;
        let Some(traj) = schedule.trajectory(ev.id) else {
            if (start..start + n).any(|t| ev.is_present(t)) {
                push(Rule::MissingTrajectory, Some(ev.id), None, 0.0);
            }
            continue;
        };
        let id = Some(ev.id);
        if (traj.soc_start - req.soc_start).abs() > tol.equality {
            push(
                Rule::SocStart,
                id,
                None,
                (traj.soc_start - req.soc_start).abs(),
            );
        }
        let mut prev = traj.soc_start;
        for k in 0..n {
            let t = start + k;
            let (ch, dis) = (traj.charge_kw[k], traj.discharge_kw[k]);
            charge[k] += ch;
            discharge[k] += dis;
            if !ev.is_present(t) && (ch != 0.0 || dis != 0.0) {
                push(Rule::Presence, id, Some(t), ch.abs().max(dis.abs()));
            }
            for p in [ch, dis] {
                if p < -tol.bound || p > limits.charger_kw + tol.bound {
                    push(Rule::ChargerBound, id, Some(t), p);
                }
            }
            if ch.min(dis) > tol.bound {
                push(Rule::EvExclusivity, id, Some(t), ch.min(dis));
            }
            let expect = soc_step(prev, ch, dis, ev.capacity_kwh, limits);
            let err = (traj.soc[k] - expect).abs();
            if err > tol.equality {
                push(Rule::SocRecursion, id, Some(t), err);
            }
            let s = traj.soc[k];
            if s < -tol.bound || s > 1.0 + tol.bound {
                push(Rule::SocBounds, id, Some(t), s);
            }
            if t + 1 == ev.departure_slot && s < ev.soc_final - tol.bound {
                push(Rule::Endpoint, id, Some(t), ev.soc_final - s);
            }
            prev = traj.soc[k];
        }
        let discharged = traj.discharged_kwh(limits.slot_hours);
        if discharged > req.discharge_cap_kwh + tol.bound {
            push(
                Rule::DischargeCap,
                id,
                None,
                discharged - req.discharge_cap_kwh,
            );
        }
    }

    for k in 0..n {
        let t = Some(start + k);
        let (imp, exp) = (schedule.import_kw[k], schedule.export_kw[k]);
        for p in [imp, exp] {
            if p < -tol.bound || p > limits.feeder_kw + tol.bound {
                push(Rule::FeederBound, None, t, p);
            }
        }
        if imp.min(exp) > tol.bound {
            push(Rule::LotExclusivity, None, t, imp.min(exp));
        }
        let err = (imp + discharge[k] - exp - charge[k]).abs();
        if err > tol.equality * (1.0 + charge[k] + discharge[k]) {
            push(Rule::PowerBalance, None, t, err);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::schedule::{recompute_soc, EvTrajectory};

    fn limits() -> LotLimits {
        LotLimits {
            feeder_kw: 100.0,
            charger_kw: 60.0,
            charge_efficiency: 1.0,
            discharge_efficiency: 1.0,
            slot_hours: 0.5,
        }
    }

    fn ev() -> EvProfile {
        EvProfile {
            id: 1,
            arrival_slot: 1,
            departure_slot: 3,
            capacity_kwh: 60.0,
            soc_initial: 0.3,
            soc_final: 0.8,
            valuation_per_kwh: 0.3,
            degradation_per_kwh: 0.14,
        }
    }

    fn good() -> (Schedule, Vec<EvRequirement>) {
        let mut traj = EvTrajectory::idle(1, 0.3, 4);
        traj.charge_kw = vec![0.0, 60.0, 0.0, 0.0];
        recompute_soc(&mut traj, &ev(), &limits());
        let mut s = Schedule::empty(0, 4);
        s.upsert(traj);
        s.rebalance();
        let reqs = vec![EvRequirement {
            profile: ev(),
            soc_start: 0.3,
            discharge_cap_kwh: 0.0,
        }];
        (s, reqs)
    }

    #[test]
    fn feasible_schedule_passes() {
        let (s, reqs) = good();
        assert!(verify_schedule(&s, &reqs, &limits(), Tolerances::default()).is_empty());
    }

    #[test]
    fn each_rule_fires() {
        let (base, reqs) = good();
        let rules = |s: &Schedule| -> Vec<Rule> {
            verify_schedule(s, &reqs, &limits(), Tolerances::default())
                .into_iter()
                .map(|v| v.rule)
                .collect()
        };

        let mut s = base.clone();
        s.evs[0].charge_kw[0] = 1.0;
        recompute_soc(&mut s.evs[0], &ev(), &limits());
        s.rebalance();
        assert!(rules(&s).contains(&Rule::Presence));

        let mut s = base.clone();
        s.evs[0].charge_kw[1] = 50.0;
        recompute_soc(&mut s.evs[0], &ev(), &limits());
        s.rebalance();
        assert_eq!(rules(&s), vec![Rule::Endpoint]);

        let mut s = base.clone();
        s.evs[0].soc[2] += 0.01;
        assert!(rules(&s).contains(&Rule::SocRecursion));

        let mut s = base.clone();
        s.import_kw[1] = 61.0;
        s.export_kw[1] = 1.0;
        assert_eq!(rules(&s), vec![Rule::LotExclusivity]);

        let mut s = base.clone();
        s.import_kw[1] = 59.0;
        assert_eq!(rules(&s), vec![Rule::PowerBalance]);

        let mut s = base.clone();
        s.evs[0].discharge_kw[2] = 2.0;
        s.evs[0].charge_kw[2] = 2.0;
        recompute_soc(&mut s.evs[0], &ev(), &limits());
        s.rebalance();
        let r = rules(&s);
        assert!(r.contains(&Rule::EvExclusivity) && r.contains(&Rule::DischargeCap));

        let mut tight = limits();
        tight.feeder_kw = 50.0;
        let v = verify_schedule(&base, &reqs, &tight, Tolerances::default());
        assert_eq!(v[0].rule, Rule::FeederBound);

        let mut s = base.clone();
        s.evs.clear();
        s.rebalance();
        assert_eq!(rules(&s), vec![Rule::MissingTrajectory]);
    }
}
