//! Real-time hourly prices and MCI (marginal system cost impact) pricing of
//! profiles and cluster centers.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::clustering::ClusterModel;
use crate::error::{Error, Result};
use crate::numfmt::format_f64;

/// Tolerance on the unit sum of a profile passed to [`mci`].
pub const MCI_UNIT_SUM_TOL: f64 = 1e-6;

/// Hourly real-time prices (currency per kWh). Negative prices are allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceCurve {
    prices: Vec<f64>,
}

impl PriceCurve {
    pub fn new(prices: Vec<f64>) -> Result<Self> {
        if prices.is_empty() {
            return Err(Error::PriceCurve("empty curve".into()));
        }
        if let Some(t) = prices.iter().position(|p| !p.is_finite()) {
            return Err(Error::PriceCurve(format!("non-finite price at hour {t}")));
        }
        Ok(PriceCurve { prices })
    }

    /// A constant curve.
    pub fn flat(hours: usize, price: f64) -> Result<Self> {
        PriceCurve::new(vec![price; hours])
    }

    /// Synthetic two-peak day (morning and evening) for demos. Not market data.
    pub fn synthetic_two_peak(hours: usize) -> Self {
        let h = hours as f64;
        let prices = (0..hours)
            .map(|t| {
                // position in a 24-hour day
                let x = t as f64 * 24.0 / h;
                let morning = (-0.5 * ((x - 8.0) / 1.5).powi(2)).exp();
                let evening = (-0.5 * ((x - 19.0) / 2.0).powi(2)).exp();
                0.08 + 0.10 * morning + 0.18 * evening
            })
            .collect();
        PriceCurve { prices }
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn hours(&self) -> usize {
        self.prices.len()
    }

    pub fn min(&self) -> f64 {
        self.prices.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.prices
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Price-weighted sum of a unit-sum profile.
pub fn mci(profile: &[f64], curve: &PriceCurve) -> Result<f64> {
    if profile.len() != curve.hours() {
        return Err(Error::DimensionMismatch {
            expected: curve.hours(),
            got: profile.len(),
        });
    }
    let sum: f64 = profile.iter().sum();
    if (sum - 1.0).abs() > MCI_UNIT_SUM_TOL {
        return Err(Error::NotUnitSum { sum });
    }
    // A constant curve prices every unit-sum profile identically; returning
    // the constant keeps rounding from inventing price differences.
    let (lo, hi) = (curve.min(), curve.max());
    if lo == hi {
        return Ok(lo);
    }
    Ok(mci_unchecked(profile, curve.prices()))
}

#[inline]
fn mci_unchecked(profile: &[f64], prices: &[f64]) -> f64 {
    profile.iter().zip(prices).map(|(w, p)| w * p).sum()
}

/// Retail price per cluster: the MCI of its center.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterPrices {
    pub price: Vec<f64>,
}

impl ClusterPrices {
    pub fn get(&self, n: usize) -> Result<f64> {
        self.price.get(n).copied().ok_or(Error::UnknownCluster(n))
    }

    pub fn len(&self) -> usize {
        self.price.len()
    }

    pub fn is_empty(&self) -> bool {
        self.price.is_empty()
    }
}

pub fn price_clusters(model: &ClusterModel, curve: &PriceCurve) -> Result<ClusterPrices> {
    let price = model
        .centers
        .iter()
        .map(|c| mci(c, curve))
        .collect::<Result<Vec<_>>>()?;
    Ok(ClusterPrices { price })
}

/// Reads an `hour,price` file; every hour in `0..H` must appear exactly once.
pub fn load_price_curve(path: &Path, hours: usize) -> Result<PriceCurve> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::MissingInput(format!("prices file {}", path.display())),
            _ => Error::csv(path, e),
        })?;
    let header = reader.headers().map_err(|e| Error::csv(path, e))?;
    if header.len() != 2 || &header[0] != "hour" || &header[1] != "price" {
        return Err(Error::MalformedHeader {
            path: path.to_path_buf(),
            reason: "expected `hour,price`".into(),
        });
    }
    let mut slots: Vec<Option<f64>> = vec![None; hours];
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let row = i + 1;
        let hour: usize = rec[0]
            .parse()
            .map_err(|_| Error::PriceCurve(format!("row {row}: malformed hour `{}`", &rec[0])))?;
        let price: f64 = rec[1]
            .parse()
            .map_err(|_| Error::PriceCurve(format!("row {row}: malformed price `{}`", &rec[1])))?;
        if !price.is_finite() {
            return Err(Error::PriceCurve(format!(
                "non-finite price at hour {hour}"
            )));
        }
        let slot = slots
            .get_mut(hour)
            .ok_or_else(|| Error::PriceCurve(format!("hour {hour} out of range 0..{hours}")))?;
        if slot.is_some() {
            return Err(Error::PriceCurve(format!("duplicate hour {hour}")));
        }
        *slot = Some(price);
    }
    let prices = slots
        .into_iter()
        .enumerate()
        .map(|(t, p)| p.ok_or_else(|| Error::PriceCurve(format!("missing hour {t}"))))
        .collect::<Result<Vec<_>>>()?;
    PriceCurve::new(prices)
}

pub fn write_price_curve(path: &Path, curve: &PriceCurve) -> Result<()> {
    let mut body = String::from("hour,price\n");
    for (t, p) in curve.prices().iter().enumerate() {
        body.push_str(&format!("{t},{}\n", format_f64(*p)));
    }
    File::create(path)
        .and_then(|mut f| f.write_all(body.as_bytes()))
        .map_err(|e| Error::io(path, e))
}
