//! Wholesale price series, operator tariffs and price perturbation.

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-slot wholesale prices in $/kWh plus the import adder δ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    slot_hours: f64,
    wholesale: Vec<f64>,
    import_adder: f64,
}

impl PriceSeries {
    pub fn new(wholesale: Vec<f64>, slot_hours: f64, import_adder: f64) -> Result<Self> {
        if !(slot_hours > 0.0 && slot_hours.is_finite()) {
            return Err(Error::arg(format!(
                "slot_hours must be > 0, got {slot_hours}"
            )));
        }
        if !(import_adder >= 0.0 && import_adder.is_finite()) {
            return Err(Error::arg(format!(
                "import_adder must be >= 0, got {import_adder}"
            )));
        }
        if let Some((t, p)) = wholesale.iter().enumerate().find(|(_, p)| !p.is_finite()) {
            return Err(Error::arg(format!(
                "wholesale price at slot {t} is not finite: {p}"
            )));
        }
        Ok(Self {
            slot_hours,
            wholesale,
            import_adder,
        })
    }

    pub fn slot_hours(&self) -> f64 {
        self.slot_hours
    }

    pub fn wholesale(&self) -> &[f64] {
        &self.wholesale
    }

    pub fn import_adder(&self) -> f64 {
        self.import_adder
    }

    pub fn len(&self) -> usize {
        self.wholesale.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wholesale.is_empty()
    }

    pub fn with_import_adder(&self, import_adder: f64) -> Result<Self> {
        Self::new(self.wholesale.clone(), self.slot_hours, import_adder)
    }
}

/// Operator buy/sell prices for the absolute slots `start_slot..start_slot + len`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TariffPair {
    pub start_slot: usize,
    pub buy: Vec<f64>,
    pub sell: Vec<f64>,
}

impl TariffPair {
    pub fn len(&self) -> usize {
        self.buy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buy.is_empty()
    }

    /// One past the last absolute slot covered.
    pub fn end_slot(&self) -> usize {
        self.start_slot + self.buy.len()
    }

    pub fn buy_at(&self, slot: usize) -> f64 {
        self.buy[slot - self.start_slot]
    }

    pub fn sell_at(&self, slot: usize) -> f64 {
        self.sell[slot - self.start_slot]
    }

    /// Absolute slot indices covered by this pair.
    pub fn slots(&self) -> std::ops::Range<usize> {
        self.start_slot..self.end_slot()
    }

    /// Largest absolute value among buy and sell prices.
    pub fn max_abs_price(&self) -> f64 {
        self.buy
            .iter()
            .chain(&self.sell)
            .fold(0.0_f64, |m, p| m.max(p.abs()))
    }
}

/// `buy = λ + δ`, `sell = λ`.
pub fn derive_tariffs(prices: &PriceSeries) -> TariffPair {
    TariffPair {
        start_slot: 0,
        buy: prices
            .wholesale
            .iter()
            .map(|p| p + prices.import_adder)
            .collect(),
        sell: prices.wholesale.clone(),
    }
}

/// Tariffs for absolute slots `from_slot..end`, keeping absolute labels.
pub fn slice_horizon(tariffs: &TariffPair, from_slot: usize) -> Result<TariffPair> {
    if from_slot < tariffs.start_slot || from_slot >= tariffs.end_slot() {
        return Err(Error::arg(format!(
            "slice start {from_slot} outside [{}, {})",
            tariffs.start_slot,
            tariffs.end_slot()
        )));
    }
    let off = from_slot - tariffs.start_slot;
    Ok(TariffPair {
        start_slot: from_slot,
        buy: tariffs.buy[off..].to_vec(),
        sell: tariffs.sell[off..].to_vec(),
    })
}

/// Multiplies each wholesale price by an independent `Normal(1, σ)` draw.
/// The adder δ is left untouched.
pub fn perturb_prices(
    prices: &PriceSeries,
    relative_sigma: f64,
    rng_seed: u64,
) -> Result<PriceSeries> {
    if !(relative_sigma >= 0.0 && relative_sigma.is_finite()) {
        return Err(Error::arg(format!(
            "relative_sigma must be >= 0, got {relative_sigma}"
        )));
    }
    if relative_sigma == 0.0 {
        return Ok(prices.clone());
    }
    let noise = Normal::new(1.0, relative_sigma).map_err(|e| Error::arg(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let wholesale = prices
        .wholesale
        .iter()
        .map(|p| p * noise.sample(&mut rng))
        .collect();
    Ok(PriceSeries {
        wholesale,
        ..prices.clone()
    })
}

/// Reads a `slot,price_per_kwh` CSV. Slot indices must cover `0..expected_slots`
/// exactly once, in any order.
pub fn load_price_csv(
    path: &Path,
    expected_slots: usize,
    slot_hours: f64,
    import_adder: f64,
) -> Result<PriceSeries> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_price_csv(
        file,
        &path.display().to_string(),
        expected_slots,
        slot_hours,
        import_adder,
    )
}

pub(crate) fn read_price_csv<R: std::io::Read>(
    reader: R,
    label: &str,
    expected_slots: usize,
    slot_hours: f64,
    import_adder: f64,
) -> Result<PriceSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "slot" || &headers[1] != "price_per_kwh" {
        return Err(Error::Format {
            path: label.to_string(),
            message: format!(
                "expected header `slot,price_per_kwh`, found `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let mut by_slot = BTreeMap::new();
    let mut rows = 0usize;
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec?;
        rows += 1;
        let parse_err = |message: String| Error::Parse {
            path: label.to_string(),
            row,
            message,
        };
        if rec.len() != 2 {
            return Err(parse_err(format!("expected 2 fields, found {}", rec.len())));
        }
        let slot: usize = rec[0].parse().map_err(|_| {
            parse_err(format!(
                "slot index `{}` is not a non-negative integer",
                &rec[0]
            ))
        })?;
        let price: f64 = rec[1]
            .parse()
            .map_err(|_| parse_err(format!("price `{}` is not a number", &rec[1])))?;
        if !price.is_finite() {
            return Err(parse_err(format!("price `{}` is not finite", &rec[1])));
        }
        if by_slot.insert(slot, price).is_some() {
            return Err(Error::Format {
                path: label.to_string(),
                message: format!("duplicate slot {slot}"),
            });
        }
    }
    if rows != expected_slots {
        return Err(Error::Length {
            path: label.to_string(),
            expected: expected_slots,
            found: rows,
        });
    }
    let mut wholesale = Vec::with_capacity(expected_slots);
    for slot in 0..expected_slots {
        match by_slot.get(&slot) {
            Some(&p) => wholesale.push(p),
            None => {
                return Err(Error::Format {
                    path: label.to_string(),
                    message: format!("missing slot {slot}"),
                })
            }
        }
    }
    PriceSeries::new(wholesale, slot_hours, import_adder)
}

pub fn write_price_csv(prices: &PriceSeries, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Format {
            path: path.display().to_string(),
            message: format!("{other:?}"),
        },
    })?;
    w.write_record(["slot", "price_per_kwh"])?;
    for (t, p) in prices.wholesale.iter().enumerate() {
        w.write_record([t.to_string(), format!("{p:?}")])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Shape of the synthetic two-peak day: a base level with a morning bump,
/// an evening bump and a midday (solar) dip, plus seeded Gaussian noise.
/// Peak centres and widths are in clock hours.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticDay {
    pub base: f64,
    pub morning_peak: f64,
    pub morning_hour: f64,
    pub morning_width: f64,
    pub evening_peak: f64,
    pub evening_hour: f64,
    pub evening_width: f64,
    pub midday_dip: f64,
    pub midday_hour: f64,
    pub midday_width: f64,
    pub noise_sigma: f64,
}

impl Default for SyntheticDay {
    fn default() -> Self {
        Self {
            base: 0.10,
            morning_peak: 0.22,
            morning_hour: 7.5,
            morning_width: 1.25,
            evening_peak: 0.42,
            evening_hour: 18.5,
            evening_width: 1.75,
            midday_dip: 0.09,
            midday_hour: 13.0,
            midday_width: 2.0,
            noise_sigma: 0.01,
        }
    }
}

impl SyntheticDay {
    /// Seasonal variant for a calendar month (1 = January). Southern-hemisphere
    /// winter months get taller evening peaks, summer months a deeper solar dip.
    pub fn for_month(month: u32) -> Self {
        let m = month.clamp(1, 12) as f64;
        // +1 in late June/July, −1 around January
        let winter = -((m - 0.5) / 12.0 * 2.0 * std::f64::consts::PI).cos();
        let d = Self::default();
        Self {
            base: d.base * (1.0 + 0.15 * winter),
            morning_peak: d.morning_peak * (1.0 + 0.25 * winter),
            evening_peak: d.evening_peak * (1.0 + 0.35 * winter),
            midday_dip: d.midday_dip * (1.0 - 0.4 * winter),
            ..d
        }
    }

    pub fn generate(
        &self,
        horizon: usize,
        slot_hours: f64,
        import_adder: f64,
        seed: u64,
    ) -> Result<PriceSeries> {
        let bump = |h: f64, centre: f64, width: f64| (-0.5 * ((h - centre) / width).powi(2)).exp();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise =
            Normal::new(0.0, self.noise_sigma.max(0.0)).map_err(|e| Error::arg(e.to_string()))?;
        let wholesale = (0..horizon)
            .map(|t| {
                let h = (t as f64 + 0.5) * slot_hours;
                let shape = self.base
                    + self.morning_peak * bump(h, self.morning_hour, self.morning_width)
                    + self.evening_peak * bump(h, self.evening_hour, self.evening_width)
                    - self.midday_dip * bump(h, self.midday_hour, self.midday_width);
                let eps = if self.noise_sigma > 0.0 {
                    noise.sample(&mut rng)
                } else {
                    0.0
                };
                ((shape + eps) * 1e5).round() / 1e5
            })
            .collect();
        PriceSeries::new(wholesale, slot_hours, import_adder)
    }
}
