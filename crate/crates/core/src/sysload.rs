//! System load when every profile able to disguise at θ does so.
//!
//! Each disguiser keeps its daily energy and reshapes it to the disguised
//! profile; the one-shot aggregate is reported without re-clustering or
//! re-pricing.

use serde::{Deserialize, Serialize};

use crate::clustering::ClusterModel;
use crate::disguise::{mix, DisguiseRecord};
use crate::error::{Error, Result};
use crate::profiles::Dataset;
use crate::zones::ThetaGrid;

/// How far a disguiser moves toward its target center.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DisguiseExtent {
    /// Exactly the minimal effort `λ = cr`.
    #[default]
    Cr,
    /// All the way to the target center (`λ = 1`).
    Full,
}

impl std::str::FromStr for DisguiseExtent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cr" => Ok(DisguiseExtent::Cr),
            "full" => Ok(DisguiseExtent::Full),
            other => Err(Error::Config(format!("unknown disguise extent `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemLoadRow {
    pub theta: f64,
    pub hourly_load: Vec<f64>,
    pub peak: f64,
    pub peak_hour: usize,
    /// `peak` over the θ = 0 peak.
    pub peak_ratio: f64,
}

/// Largest entry and its (first) index.
pub fn peak_of(load: &[f64]) -> (f64, usize) {
    let mut best = (f64::NEG_INFINITY, 0);
    for (t, &x) in load.iter().enumerate() {
        if x > best.0 {
            best = (x, t);
        }
    }
    best
}

fn hourly_load(
    data: &Dataset,
    records: &[DisguiseRecord],
    model: &ClusterModel,
    theta: f64,
    extent: DisguiseExtent,
) -> Result<Vec<f64>> {
    if theta.is_nan() || theta < 0.0 {
        return Err(Error::NegativeTheta(theta));
    }
    if records.len() != data.len() {
        return Err(Error::DimensionMismatch {
            expected: data.len(),
            got: records.len(),
        });
    }
    let hours = data.hours().unwrap_or(0);
    let mut load = vec![0.0; hours];
    for (p, r) in data.profiles.iter().zip(records) {
        let shaped;
        let weights: &[f64] = match r.target {
            Some(t) if r.within(theta) => {
                let c = model.centers.get(t).ok_or(Error::UnknownCluster(t))?;
                let lambda = match extent {
                    DisguiseExtent::Cr => r.cr,
                    DisguiseExtent::Full => 1.0,
                };
                shaped = mix(&p.weights, c, lambda);
                &shaped
            }
            _ => &p.weights,
        };
        for (l, w) in load.iter_mut().zip(weights) {
            *l += p.total_energy * w;
        }
    }
    Ok(load)
}

fn row(theta: f64, hourly_load: Vec<f64>, baseline_peak: f64) -> SystemLoadRow {
    let (peak, peak_hour) = peak_of(&hourly_load);
    SystemLoadRow {
        theta,
        hourly_load,
        peak,
        peak_hour,
        peak_ratio: peak / baseline_peak,
    }
}

/// Aggregate load at one θ.
pub fn aggregate(
    data: &Dataset,
    records: &[DisguiseRecord],
    model: &ClusterModel,
    theta: f64,
    extent: DisguiseExtent,
) -> Result<SystemLoadRow> {
    let baseline = peak_of(&hourly_load(data, records, model, 0.0, extent)?).0;
    Ok(row(
        theta,
        hourly_load(data, records, model, theta, extent)?,
        baseline,
    ))
}

/// One row per grid point, in grid order.
pub fn peak_sweep(
    data: &Dataset,
    records: &[DisguiseRecord],
    model: &ClusterModel,
    grid: &ThetaGrid,
    extent: DisguiseExtent,
) -> Result<Vec<SystemLoadRow>> {
    let baseline = peak_of(&hourly_load(data, records, model, 0.0, extent)?).0;
    grid.points()
        .iter()
        .map(|&theta| {
            Ok(row(
                theta,
                hourly_load(data, records, model, theta, extent)?,
                baseline,
            ))
        })
        .collect()
}
