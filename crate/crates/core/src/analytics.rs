//! KPIs, scheme comparisons, Monte Carlo price noise and plot-ready CSVs.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::{derive_tariffs, perturb_prices, PriceSeries};
use crate::mechanism::DayResult;
use crate::scenario::FleetScenario;

/// Clock-hour windows `[start, end)`.
pub const MORNING_PEAK_HOURS: (f64, f64) = (6.0, 8.0);
pub const EVENING_PEAK_HOURS: (f64, f64) = (16.0, 22.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Period {
    MorningPeak,
    EveningPeak,
    OffPeak,
}

/// Period of the slot starting at `slot * slot_hours` hours.
pub fn period_of(slot: usize, slot_hours: f64) -> Period {
    let h = slot as f64 * slot_hours;
    let within = |(a, b): (f64, f64)| h >= a - 1e-9 && h < b - 1e-9;
    if within(MORNING_PEAK_HOURS) {
        Period::MorningPeak
    } else if within(EVENING_PEAK_HOURS) {
        Period::EveningPeak
    } else {
        Period::OffPeak
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PeriodFlows {
    pub import_kwh: f64,
    pub export_kwh: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Kpis {
    pub operator_profit: f64,
    pub total_ev_payments: f64,
    pub settlement: f64,
    pub total_ev_degradation_cost: f64,
    pub exported_kwh: f64,
    pub imported_kwh: f64,
    pub arrivals: usize,
    pub accepted: usize,
    pub acceptance_rate: f64,
    pub morning_peak: PeriodFlows,
    pub evening_peak: PeriodFlows,
    pub off_peak: PeriodFlows,
}

/// Aggregates a finished day. Degradation cost uses each EV's own rate from
/// `scenario` and its realized discharge.
pub fn compute_kpis(result: &DayResult, scenario: &FleetScenario) -> Result<Kpis> {
    if result.horizon_slots != scenario.horizon_slots
        || result.schedule.n_slots() != result.horizon_slots
    {
        return Err(Error::arg(format!(
            "result covers {} slots, scenario {}",
            result.horizon_slots, scenario.horizon_slots
        )));
    }
    let tau = result.slot_hours;
    let s = &result.schedule;
    let mut k = Kpis {
        operator_profit: result.operator_profit,
        total_ev_payments: result.total_payments,
        settlement: result.settlement,
        arrivals: result.quotes.len(),
        accepted: result.accepted(),
        ..Kpis::default()
    };
    k.acceptance_rate = if k.arrivals == 0 {
        0.0
    } else {
        k.accepted as f64 / k.arrivals as f64
    };
    for traj in &s.evs {
        let ev = scenario
            .evs
            .iter()
            .find(|e| e.id == traj.ev_id)
            .ok_or_else(|| Error::arg(format!("EV {} is not in the scenario", traj.ev_id)))?;
        k.total_ev_degradation_cost += ev.degradation_per_kwh * traj.discharged_kwh(tau);
    }
    for i in 0..s.n_slots() {
        let slot = s.start_slot + i;
        let (imp, exp) = (s.import_kw[i] * tau, s.export_kw[i] * tau);
        k.imported_kwh += imp;
        k.exported_kwh += exp;
        let p = match period_of(slot, tau) {
            Period::MorningPeak => &mut k.morning_peak,
            Period::EveningPeak => &mut k.evening_peak,
            Period::OffPeak => &mut k.off_peak,
        };
        p.import_kwh += imp;
        p.export_kwh += exp;
    }
    Ok(k)
}

/// Percentage change of a reference scheme against one comparator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImprovementRow {
    pub versus: String,
    /// `None` when the comparator exported nothing.
    pub export_change_pct: Option<f64>,
    pub profit_change_pct: f64,
    pub payment_reduction_pct: f64,
}

fn pct(a: f64, b: f64) -> f64 {
    (a - b) / b * 100.0
}

/// Improvement of `reference` over every other labelled row, in input order.
pub fn compare(table: &[(String, Kpis)], reference: &str) -> Result<Vec<ImprovementRow>> {
    let r = &table
        .iter()
        .find(|(l, _)| l == reference)
        .ok_or_else(|| Error::arg(format!("no row labelled `{reference}`")))?
        .1;
    Ok(table
        .iter()
        .filter(|(l, _)| l != reference)
        .map(|(l, c)| ImprovementRow {
            versus: l.clone(),
            export_change_pct: (c.exported_kwh != 0.0).then(|| pct(r.exported_kwh, c.exported_kwh)),
            profit_change_pct: pct(r.operator_profit, c.operator_profit),
            payment_reduction_pct: -pct(r.total_ev_payments, c.total_ev_payments),
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub sigma: f64,
    pub n_scenarios: usize,
    pub base_profit: f64,
    pub mean_abs_pct_deviation: f64,
    pub mean_pct_deviation: f64,
    pub prob_profit_drop_gt_5pct: f64,
    pub median_profit: f64,
    /// Interquartile range of the percentage deviations.
    pub deviation_iqr: f64,
    /// Percentage deviation per scenario, in scenario order.
    pub deviation_samples: Vec<f64>,
    pub profit_samples: Vec<f64>,
}

/// Lower-nearest order statistic of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let i = (q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64).floor() as usize;
    sorted[i]
}

/// Seed of scenario `index` in a Monte Carlo run seeded with `seed`.
pub fn scenario_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 of the pair
    let mut z = seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_add(1).wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Re-prices the realized flows of `result` under `n` noisy copies of
/// `prices`. Schedules and EV payments stay fixed.
pub fn monte_carlo_profit(
    result: &DayResult,
    prices: &PriceSeries,
    sigma: f64,
    n: usize,
    seed: u64,
) -> Result<McSummary> {
    if n == 0 {
        return Err(Error::arg("need at least one scenario"));
    }
    if prices.len() != result.horizon_slots {
        return Err(Error::arg("price series and result horizons differ"));
    }
    let base = result.operator_profit;
    if base == 0.0 {
        return Err(Error::arg(
            "unperturbed profit is zero; deviations are undefined",
        ));
    }
    let tau = result.slot_hours;
    let profits: Vec<f64> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let p = perturb_prices(prices, sigma, scenario_seed(seed, i))?;
            Ok(result.total_payments - result.schedule.settlement(&derive_tariffs(&p), tau))
        })
        .collect::<Result<_>>()?;
    let dev: Vec<f64> = profits
        .iter()
        .map(|p| (p - base) / base.abs() * 100.0)
        .collect();
    let nf = n as f64;
    let mut sorted_dev = dev.clone();
    sorted_dev.sort_by(f64::total_cmp);
    let mut sorted_profit = profits.clone();
    sorted_profit.sort_by(f64::total_cmp);
    Ok(McSummary {
        sigma,
        n_scenarios: n,
        base_profit: base,
        mean_abs_pct_deviation: dev.iter().map(|d| d.abs()).sum::<f64>() / nf,
        mean_pct_deviation: dev.iter().sum::<f64>() / nf,
        prob_profit_drop_gt_5pct: dev.iter().filter(|d| **d < -5.0).count() as f64 / nf,
        median_profit: quantile(&sorted_profit, 0.5),
        deviation_iqr: quantile(&sorted_dev, 0.75) - quantile(&sorted_dev, 0.25),
        deviation_samples: dev,
        profit_samples: profits,
    })
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    Ok(csv::Writer::from_path(path)?)
}

fn finish(mut w: csv::Writer<std::fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

/// `kpis.csv`: one row per scheme.
pub fn write_kpi_table(rows: &[(String, Kpis)], path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record([
        "scheme",
        "operator_profit",
        "total_ev_payments",
        "settlement",
        "degradation_cost",
        "exported_kwh",
        "imported_kwh",
        "accepted",
        "arrivals",
        "acceptance_rate",
        "morning_import_kwh",
        "morning_export_kwh",
        "evening_import_kwh",
        "evening_export_kwh",
        "offpeak_import_kwh",
        "offpeak_export_kwh",
    ])?;
    for (label, k) in rows {
        let mut rec = vec![label.clone()];
        rec.extend(
            [
                k.operator_profit,
                k.total_ev_payments,
                k.settlement,
                k.total_ev_degradation_cost,
                k.exported_kwh,
                k.imported_kwh,
            ]
            .iter()
            .map(f64::to_string),
        );
        rec.push(k.accepted.to_string());
        rec.push(k.arrivals.to_string());
        rec.push(k.acceptance_rate.to_string());
        for p in [k.morning_peak, k.evening_peak, k.off_peak] {
            rec.push(p.import_kwh.to_string());
            rec.push(p.export_kwh.to_string());
        }
        w.write_record(&rec)?;
    }
    finish(w, path)
}

/// `flows.csv`: one row per scheme and slot.
pub fn write_flow_profiles(rows: &[(String, &DayResult)], path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record([
        "scheme",
        "slot",
        "period",
        "import_kw",
        "export_kw",
        "buy_price",
        "sell_price",
    ])?;
    for (label, r) in rows {
        let s = &r.schedule;
        for i in 0..s.n_slots() {
            let slot = s.start_slot + i;
            let period = match period_of(slot, r.slot_hours) {
                Period::MorningPeak => "morning_peak",
                Period::EveningPeak => "evening_peak",
                Period::OffPeak => "off_peak",
            };
            w.write_record([
                label.clone(),
                slot.to_string(),
                period.to_string(),
                s.import_kw[i].to_string(),
                s.export_kw[i].to_string(),
                r.tariffs.buy_at(slot).to_string(),
                r.tariffs.sell_at(slot).to_string(),
            ])?;
        }
    }
    finish(w, path)
}

/// `improvements.csv`; an export change that is undefined is written as "—".
pub fn write_improvements(rows: &[ImprovementRow], path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record([
        "versus",
        "export_change_pct",
        "profit_change_pct",
        "payment_reduction_pct",
    ])?;
    for r in rows {
        w.write_record([
            r.versus.clone(),
            r.export_change_pct
                .map_or("—".to_string(), |x| format!("{x:.2}")),
            format!("{:.2}", r.profit_change_pct),
            format!("{:.2}", r.payment_reduction_pct),
        ])?;
    }
    finish(w, path)
}

/// Empirical profit CDF: profits sorted ascending with cumulative probability.
pub fn write_profit_cdf(summary: &McSummary, path: &Path) -> Result<()> {
    let mut sorted = summary.profit_samples.clone();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut w = writer(path)?;
    w.write_record(["profit", "pct_deviation", "cdf"])?;
    for (i, p) in sorted.iter().enumerate() {
        let dev = (p - summary.base_profit) / summary.base_profit.abs() * 100.0;
        w.write_record([
            p.to_string(),
            dev.to_string(),
            ((i + 1) as f64 / n).to_string(),
        ])?;
    }
    finish(w, path)
}

/// Sweep table: one row per point and scheme.
pub fn write_sweep(parameter: &str, points: &[(String, String, Kpis)], path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record([
        parameter,
        "scheme",
        "operator_profit",
        "total_ev_payments",
        "exported_kwh",
        "imported_kwh",
        "accepted",
        "acceptance_rate",
    ])?;
    for (v, scheme, k) in points {
        w.write_record([
            v.clone(),
            scheme.clone(),
            k.operator_profit.to_string(),
            k.total_ev_payments.to_string(),
            k.exported_kwh.to_string(),
            k.imported_kwh.to_string(),
            k.accepted.to_string(),
            k.acceptance_rate.to_string(),
        ])?;
    }
    finish(w, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::TariffPair;
    use crate::optimizer::{EvTrajectory, Schedule};
    use crate::scenario::EvProfile;

    fn ev(id: u32) -> EvProfile {
        EvProfile {
            id,
            arrival_slot: 0,
            departure_slot: 2,
            capacity_kwh: 60.0,
            soc_initial: 0.2,
            soc_final: 0.7,
            valuation_per_kwh: 0.3,
            degradation_per_kwh: 0.14,
        }
    }

    fn day(
        charge: &[f64],
        discharge: &[f64],
        buy: &[f64],
        sell: &[f64],
        payments: f64,
    ) -> DayResult {
        let n = charge.len();
        let mut s = Schedule::empty(0, n);
        let mut t = EvTrajectory::idle(1, 0.2, n);
        t.charge_kw = charge.to_vec();
        t.discharge_kw = discharge.to_vec();
        s.upsert(t);
        s.rebalance();
        let tariffs = TariffPair {
            start_slot: 0,
            buy: buy.to_vec(),
            sell: sell.to_vec(),
        };
        let settlement = s.settlement(&tariffs, 0.5);
        DayResult {
            scenario_seed: None,
            horizon_slots: n,
            slot_hours: 0.5,
            menu: vec![0.0],
            tariffs,
            quotes: Vec::new(),
            contracts: Vec::new(),
            total_payments: payments,
            settlement,
            operator_profit: payments - settlement,
            imported_kwh: s.imported_kwh(0.5),
            exported_kwh: s.exported_kwh(0.5),
            schedule: s,
        }
    }

    fn scenario(n: usize) -> FleetScenario {
        let mut s = FleetScenario::empty(n, 0.5);
        s.evs = vec![ev(1)];
        s
    }

    #[test]
    fn periods_partition_the_day() {
        let slots = |p| {
            (0..48)
                .filter(|&t| period_of(t, 0.5) == p)
                .collect::<Vec<_>>()
        };
        assert_eq!(slots(Period::MorningPeak), (12..16).collect::<Vec<_>>());
        assert_eq!(slots(Period::EveningPeak), (32..44).collect::<Vec<_>>());
        assert_eq!(slots(Period::OffPeak).len(), 48 - 4 - 12);
    }

    #[test]
    fn zero_flow_day_has_zero_kpis() {
        let r = day(&[0.0; 4], &[0.0; 4], &[0.1; 4], &[0.1; 4], 0.0);
        let k = compute_kpis(&r, &scenario(4)).unwrap();
        assert_eq!(k.operator_profit, 0.0);
        assert_eq!(
            k.exported_kwh + k.imported_kwh + k.total_ev_degradation_cost,
            0.0
        );
        assert!(compute_kpis(&r, &scenario(5)).is_err());
    }

    #[test]
    fn single_ev_hand_computation() {
        // 30 kWh stored at η = √0.9 needs 31.62 kWh from the grid.
        let eta = 0.9f64.sqrt();
        let p = 30.0 / eta; // kW over one hour of two slots
        let r = day(&[p, p], &[0.0, 0.0], &[0.1, 0.1], &[0.1, 0.1], 6.0);
        let k = compute_kpis(&r, &scenario(2)).unwrap();
        assert!((k.imported_kwh - 31.6228).abs() < 1e-4);
        assert!((k.settlement - 3.16228).abs() < 1e-5);
        assert!((k.operator_profit - 2.83772).abs() < 1e-5);
    }

    #[test]
    fn degradation_cost_and_period_sums() {
        let mut charge = vec![0.0; 48];
        let mut dis = vec![0.0; 48];
        charge[13] = 20.0;
        dis[35] = 20.0; // 10 kWh
        let r = day(&charge, &dis, &[0.2; 48], &[0.1; 48], 0.0);
        let k = compute_kpis(&r, &scenario(48)).unwrap();
        assert!((k.total_ev_degradation_cost - 1.40).abs() < 1e-12);
        let imp = k.morning_peak.import_kwh + k.evening_peak.import_kwh + k.off_peak.import_kwh;
        let exp = k.morning_peak.export_kwh + k.evening_peak.export_kwh + k.off_peak.export_kwh;
        assert!((imp - k.imported_kwh).abs() < 1e-12 && (exp - k.exported_kwh).abs() < 1e-12);
        assert_eq!(k.evening_peak.export_kwh, 10.0);
        assert!((k.operator_profit - (k.total_ev_payments - k.settlement)).abs() < 1e-6);
    }

    fn kpis(profit: f64, pay: f64, exp: f64) -> Kpis {
        Kpis {
            operator_profit: profit,
            total_ev_payments: pay,
            exported_kwh: exp,
            ..Kpis::default()
        }
    }

    #[test]
    fn comparison_rows() {
        let t = vec![
            ("menu".to_string(), kpis(130.0, 80.0, 50.0)),
            ("flat".to_string(), kpis(100.0, 100.0, 0.0)),
            ("same".to_string(), kpis(130.0, 80.0, 50.0)),
        ];
        let rows = compare(&t, "menu").unwrap();
        assert_eq!(rows.len(), 2);
        assert!((rows[0].profit_change_pct - 30.0).abs() < 1e-12);
        assert!((rows[0].payment_reduction_pct - 20.0).abs() < 1e-12);
        assert_eq!(rows[0].export_change_pct, None);
        assert_eq!(rows[1].profit_change_pct, 0.0);
        assert_eq!(rows[1].export_change_pct, Some(0.0));
        assert!(compare(&t, "nope").is_err());
    }

    #[test]
    fn profit_change_round_trips() {
        for (a, b) in [(130.0, 100.0), (80.0, 120.0), (-5.0, 40.0)] {
            let t = vec![
                ("a".to_string(), kpis(a, 1.0, 1.0)),
                ("b".to_string(), kpis(b, 1.0, 1.0)),
            ];
            let x = compare(&t, "a").unwrap()[0].profit_change_pct;
            let y = compare(&t, "b").unwrap()[0].profit_change_pct;
            assert!((x + y / (1.0 + y / 100.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn lower_nearest_quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.5), 2.0);
        assert_eq!(quantile(&v, 0.25), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
    }

    fn mc_day() -> (DayResult, PriceSeries) {
        let prices = PriceSeries::new(vec![0.05, 0.08, 0.30, 0.40], 0.5, 0.1).unwrap();
        let t = derive_tariffs(&prices);
        (
            day(
                &[60.0, 60.0, 0.0, 0.0],
                &[0.0, 0.0, 30.0, 30.0],
                &t.buy,
                &t.sell,
                20.0,
            ),
            prices,
        )
    }

    #[test]
    fn zero_noise_has_zero_deviation() {
        let (r, p) = mc_day();
        let s = monte_carlo_profit(&r, &p, 0.0, 50, 3).unwrap();
        assert_eq!(s.mean_abs_pct_deviation, 0.0);
        assert_eq!(s.prob_profit_drop_gt_5pct, 0.0);
        assert_eq!(s.median_profit, r.operator_profit);
    }

    #[test]
    fn monte_carlo_is_reproducible_and_widens() {
        let (r, p) = mc_day();
        let a = monte_carlo_profit(&r, &p, 0.2, 200, 9).unwrap();
        assert_eq!(a, monte_carlo_profit(&r, &p, 0.2, 200, 9).unwrap());
        let mut last = 0.0;
        for sigma in [0.1, 0.2, 0.3, 0.4, 0.5] {
            let s = monte_carlo_profit(&r, &p, sigma, 400, 9).unwrap();
            assert!((0.0..=1.0).contains(&s.prob_profit_drop_gt_5pct));
            assert!(s.deviation_iqr >= last);
            last = s.deviation_iqr;
        }
    }

    #[test]
    fn csv_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let (r, p) = mc_day();
        let k = kpis(1.0, 1.0, 0.0);
        write_kpi_table(
            &[("a".into(), k.clone()), ("b".into(), k)],
            &dir.path().join("k.csv"),
        )
        .unwrap();
        let text = std::fs::read_to_string(dir.path().join("k.csv")).unwrap();
        assert_eq!(text.lines().count(), 3);
        write_flow_profiles(
            &[("a".into(), &r), ("b".into(), &r)],
            &dir.path().join("f.csv"),
        )
        .unwrap();
        let text = std::fs::read_to_string(dir.path().join("f.csv")).unwrap();
        assert_eq!(text.lines().count(), 1 + 2 * 4);
        let s = monte_carlo_profit(&r, &p, 0.3, 100, 1).unwrap();
        write_profit_cdf(&s, &dir.path().join("c.csv")).unwrap();
        let mut rd = csv::Reader::from_path(dir.path().join("c.csv")).unwrap();
        let col: Vec<f64> = rd
            .records()
            .map(|r| r.unwrap()[0].parse().unwrap())
            .collect();
        assert!(col.windows(2).all(|w| w[0] <= w[1]));
        let rows = vec![ImprovementRow {
            versus: "flat".into(),
            export_change_pct: None,
            profit_change_pct: 1.0,
            payment_reduction_pct: 2.0,
        }];
        write_improvements(&rows, &dir.path().join("i.csv")).unwrap();
        assert!(std::fs::read_to_string(dir.path().join("i.csv"))
            .unwrap()
            .contains("flat,—,1.00,2.00"));
    }
}
