use serde::{Deserialize, Serialize};

use crate::market_data::TariffPair;
use crate::scenario::{EvId, EvProfile};

use super::LotLimits;

/// Power trajectory of one EV over the slots of a [`Schedule`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvTrajectory {
    pub ev_id: EvId,
    /// SoC at the start of the schedule's first slot (or at arrival).
    pub soc_start: f64,
    pub charge_kw: Vec<f64>,
    pub discharge_kw: Vec<f64>,
    /// SoC at the end of each slot.
    pub soc: Vec<f64>,
}

impl EvTrajectory {
    pub fn idle(ev_id: EvId, soc_start: f64, n_slots: usize) -> Self {
        Self {
            ev_id,
            soc_start,
            charge_kw: vec![0.0; n_slots],
            discharge_kw: vec![0.0; n_slots],
            soc: vec![soc_start; n_slots],
        }
    }

    pub fn discharged_kwh(&self, slot_hours: f64) -> f64 {
        self.discharge_kw.iter().sum::<f64>() * slot_hours
    }

    pub fn charged_kwh(&self, slot_hours: f64) -> f64 {
        self.charge_kw.iter().sum::<f64>() * slot_hours
    }
}

/// Per-EV and lot-level power over absolute slots `start_slot..start_slot + n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub start_slot: usize,
    /// Sorted by `ev_id`.
    pub evs: Vec<EvTrajectory>,
    pub import_kw: Vec<f64>,
    pub export_kw: Vec<f64>,
}

impl Schedule {
    pub fn empty(start_slot: usize, n_slots: usize) -> Self {
        Self {
            start_slot,
            evs: Vec::new(),
            import_kw: vec![0.0; n_slots],
            export_kw: vec![0.0; n_slots],
        }
    }

    pub fn n_slots(&self) -> usize {
        self.import_kw.len()
    }

    pub fn end_slot(&self) -> usize {
        self.start_slot + self.n_slots()
    }

    pub fn trajectory(&self, id: EvId) -> Option<&EvTrajectory> {
        self.evs
            .binary_search_by_key(&id, |e| e.ev_id)
            .ok()
            .map(|i| &self.evs[i])
    }

    pub fn trajectory_mut(&mut self, id: EvId) -> Option<&mut EvTrajectory> {
        self.evs
            .binary_search_by_key(&id, |e| e.ev_id)
            .ok()
            .map(move |i| &mut self.evs[i])
    }

    /// Inserts (or replaces) a trajectory keeping the id order.
    pub fn upsert(&mut self, traj: EvTrajectory) {
        match self.evs.binary_search_by_key(&traj.ev_id, |e| e.ev_id) {
            Ok(i) => self.evs[i] = traj,
            Err(i) => self.evs.insert(i, traj),
        }
    }

    /// The part of the schedule from absolute slot `from` on. Trajectories
    /// keep their ids; `soc_start` becomes the SoC at the end of `from − 1`.
    pub fn tail(&self, from: usize) -> Schedule {
        let off = from.clamp(self.start_slot, self.end_slot()) - self.start_slot;
        Schedule {
            start_slot: self.start_slot + off,
            evs: self
                .evs
                .iter()
                .map(|e| EvTrajectory {
                    ev_id: e.ev_id,
                    soc_start: if off == 0 {
                        e.soc_start
                    } else {
                        e.soc[off - 1]
                    },
                    charge_kw: e.charge_kw[off..].to_vec(),
                    discharge_kw: e.discharge_kw[off..].to_vec(),
                    soc: e.soc[off..].to_vec(),
                })
                .collect(),
            import_kw: self.import_kw[off..].to_vec(),
            export_kw: self.export_kw[off..].to_vec(),
        }
    }

    /// `τ · Σ (buy·P_imp − sell·P_exp)` over the schedule's slots.
    pub fn settlement(&self, tariffs: &TariffPair, slot_hours: f64) -> f64 {
        (0..self.n_slots())
            .map(|k| {
                let t = self.start_slot + k;
                tariffs.buy_at(t) * self.import_kw[k] - tariffs.sell_at(t) * self.export_kw[k]
            })
            .sum::<f64>()
            * slot_hours
    }

    pub fn imported_kwh(&self, slot_hours: f64) -> f64 {
        self.import_kw.iter().sum::<f64>() * slot_hours
    }

    pub fn exported_kwh(&self, slot_hours: f64) -> f64 {
        self.export_kw.iter().sum::<f64>() * slot_hours
    }

    /// Recomputes lot flows from the EV powers: net load is imported when
    /// positive and exported when negative.
    pub fn rebalance(&mut self) {
        for k in 0..self.n_slots() {
            let net: f64 = self
                .evs
                .iter()
                .map(|e| e.charge_kw[k] - e.discharge_kw[k])
                .sum();
            self.import_kw[k] = net.max(0.0);
            self.export_kw[k] = (-net).max(0.0);
        }
    }
}

/// SoC after one slot of `charge_kw` / `discharge_kw`.
pub fn soc_step(
    soc: f64,
    charge_kw: f64,
    discharge_kw: f64,
    capacity_kwh: f64,
    limits: &LotLimits,
) -> f64 {
    soc + limits.slot_hours / capacity_kwh
        * (limits.charge_efficiency * charge_kw - discharge_kw / limits.discharge_efficiency)
}

/// Recomputes a trajectory's SoC column from its powers.
pub fn recompute_soc(traj: &mut EvTrajectory, profile: &EvProfile, limits: &LotLimits) {
    let mut s = traj.soc_start;
    for k in 0..traj.soc.len() {
        s = soc_step(
            s,
            traj.charge_kw[k],
            traj.discharge_kw[k],
            profile.capacity_kwh,
            limits,
        );
        traj.soc[k] = s;
    }
}
