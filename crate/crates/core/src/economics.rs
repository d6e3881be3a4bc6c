//! What disguising is worth: the bill difference between the home and target
//! cluster prices, a utility-based variant that charges for discomfort, and
//! θ-indexed average-benefit curves.
//!
//! Disguising keeps the daily energy fixed and both the original and the
//! disguised normalized profiles sum to one, so the bill difference reduces to
//! `p_home - p_target` per unit of energy.

use serde::{Deserialize, Serialize};

use crate::clustering::l1_distance;
use crate::disguise::DisguiseRecord;
use crate::error::{Error, Result};
use crate::pricing::ClusterPrices;
use crate::profiles::{Dataset, NormalizedProfile};
use crate::zones::ThetaGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenefitBasis {
    /// Scale by the profile's real daily kWh.
    #[default]
    Actual,
    /// Per unit of energy (unit-sum profiles).
    Normalized,
}

impl BenefitBasis {
    pub fn as_str(self) -> &'static str {
        match self {
            BenefitBasis::Actual => "actual",
            BenefitBasis::Normalized => "normalized",
        }
    }

    fn factor(self, profile: &NormalizedProfile) -> f64 {
        match self {
            BenefitBasis::Actual => profile.total_energy,
            BenefitBasis::Normalized => 1.0,
        }
    }
}

impl std::str::FromStr for BenefitBasis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "actual" => Ok(BenefitBasis::Actual),
            "normalized" => Ok(BenefitBasis::Normalized),
            other => Err(Error::Config(format!("unknown benefit basis `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenefitRecord {
    pub profile_id: String,
    pub benefit: f64,
    pub basis: BenefitBasis,
    /// False when the profile has no cheaper reachable cluster (benefit 0).
    pub strategic: bool,
}

/// Parameters of the linear-discomfort happiness `u_max - c·||d̃ - d||₁`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UtilityParams {
    pub u_max: f64,
    pub c: f64,
}

impl UtilityParams {
    pub fn new(u_max: f64, c: f64) -> Result<Self> {
        if c.is_nan() || c < 0.0 || !u_max.is_finite() || !c.is_finite() {
            return Err(Error::Config(format!(
                "utility parameters must be finite with c >= 0 (u_max = {u_max}, c = {c})"
            )));
        }
        Ok(UtilityParams { u_max, c })
    }
}

fn strategic_prices(record: &DisguiseRecord, prices: &ClusterPrices) -> Result<Option<(f64, f64)>> {
    match record.target {
        Some(t) if record.cr.is_finite() => {
            Ok(Some((prices.get(record.home_cluster)?, prices.get(t)?)))
        }
        _ => Ok(None),
    }
}

pub fn bill_benefit(
    record: &DisguiseRecord,
    profile: &NormalizedProfile,
    prices: &ClusterPrices,
    basis: BenefitBasis,
) -> Result<BenefitRecord> {
    let (benefit, strategic) = match strategic_prices(record, prices)? {
        Some((home, target)) => (basis.factor(profile) * (home - target), true),
        None => (0.0, false),
    };
    Ok(BenefitRecord {
        profile_id: record.profile_id.clone(),
        benefit,
        basis,
        strategic,
    })
}

/// Bill benefits for every record, in order.
pub fn bill_benefits(
    records: &[DisguiseRecord],
    data: &Dataset,
    prices: &ClusterPrices,
    basis: BenefitBasis,
) -> Result<Vec<BenefitRecord>> {
    records
        .iter()
        .zip(&data.profiles)
        .map(|(r, p)| bill_benefit(r, p, prices, basis))
        .collect()
}

/// `u_max - c·||d_tilde - d||₁`.
pub fn happiness(d_tilde: &[f64], d: &[f64], params: &UtilityParams) -> Result<f64> {
    Ok(params.u_max - params.c * l1_distance(d_tilde, d)?)
}

/// Happiness of consuming `profile_weights` minus the bill at `price`.
pub fn utility(
    profile_weights: &[f64],
    total_energy: f64,
    price: f64,
    d_ref: &[f64],
    params: &UtilityParams,
) -> Result<f64> {
    Ok(happiness(profile_weights, d_ref, params)? - price * total_energy)
}

/// Utility after disguising minus utility before. Positive means disguising
/// pays off net of discomfort.
pub fn utility_gain(
    record: &DisguiseRecord,
    profile: &NormalizedProfile,
    prices: &ClusterPrices,
    params: &UtilityParams,
) -> Result<f64> {
    let (home, target) = strategic_prices(record, prices)?
        .ok_or_else(|| Error::NotStrategic(record.profile_id.clone()))?;
    let d = &profile.weights;
    let d_tilde = record
        .disguised_weights
        .as_ref()
        .ok_or_else(|| Error::NotStrategic(record.profile_id.clone()))?;
    // u(d̃ at p_target) - u(d at p_home), grouped as happiness change plus
    // bill change so the discomfort-free case reproduces the bill benefit
    // bit-for-bit.
    let comfort = happiness(d_tilde, d, params)? - happiness(d, d, params)?;
    Ok(comfort + profile.total_energy * (home - target))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenefitCurveRow {
    pub theta: f64,
    /// Mean benefit over profiles with `cr <= θ`; 0 if none.
    pub avg_cumulative: f64,
    /// Mean benefit over profiles whose `cr` falls in `(previous θ, θ]`; the
    /// first grid point uses `cr <= θ`.
    pub avg_marginal: f64,
    pub n_strategic: usize,
}

pub fn benefit_curves(
    records: &[DisguiseRecord],
    data: &Dataset,
    prices: &ClusterPrices,
    grid: &ThetaGrid,
    basis: BenefitBasis,
) -> Result<Vec<BenefitCurveRow>> {
    if grid.is_empty() {
        return Err(Error::InvalidGrid("empty grid".into()));
    }
    let benefits = bill_benefits(records, data, prices, basis)?;
    let mut rows = Vec::with_capacity(grid.len());
    let mut prev = f64::NEG_INFINITY;
    for &theta in grid.points() {
        let (mut cum_sum, mut cum_n, mut bin_sum, mut bin_n) = (0.0, 0usize, 0.0, 0usize);
        for (r, b) in records.iter().zip(&benefits) {
            if r.cr <= theta {
                cum_sum += b.benefit;
                cum_n += 1;
                if r.cr > prev {
                    bin_sum += b.benefit;
                    bin_n += 1;
                }
            }
        }
        let mean = |s: f64, n: usize| if n == 0 { 0.0 } else { s / n as f64 };
        rows.push(BenefitCurveRow {
            theta,
            avg_cumulative: mean(cum_sum, cum_n),
            avg_marginal: mean(bin_sum, bin_n),
            n_strategic: cum_n,
        });
        prev = theta;
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disguise::mix;
    use proptest::prelude::*;

    fn profile(weights: Vec<f64>, total: f64) -> NormalizedProfile {
        NormalizedProfile {
            profile_id: "p".into(),
            weights,
            total_energy: total,
        }
    }

    fn record(home: usize, target: Option<usize>, cr: f64, d: &[f64], c: &[f64]) -> DisguiseRecord {
        DisguiseRecord {
            profile_id: "p".into(),
            home_cluster: home,
            cr,
            target,
            disguised_weights: target.map(|_| mix(d, c, cr)),
        }
    }

    /// Bill difference evaluated term by term on the vectors.
    fn literal_bill(p_home: f64, d: &[f64], p_target: f64, d_tilde: &[f64], scale: f64) -> f64 {
        p_home * d.iter().map(|x| x * scale).sum::<f64>()
            - p_target * d_tilde.iter().map(|x| x * scale).sum::<f64>()
    }

    #[test]
    fn bill_benefit_examples() {
        let d = vec![0.5, 0.5];
        let c = vec![1.0, 0.0];
        let prices = ClusterPrices {
            price: vec![0.2, 0.2],
        };
        let b = bill_benefit(
            &record(0, Some(1), 0.1, &d, &c),
            &profile(d.clone(), 30.0),
            &prices,
            BenefitBasis::Actual,
        )
        .unwrap();
        assert_eq!(b.benefit, 0.0);

        let prices = ClusterPrices {
            price: vec![0.20, 0.15],
        };
        let b = bill_benefit(
            &record(0, Some(1), 0.1, &d, &c),
            &profile(d.clone(), 30.0),
            &prices,
            BenefitBasis::Actual,
        )
        .unwrap();
        assert!((b.benefit - 1.5).abs() < 1e-12);
        assert!(b.strategic);
        let b = bill_benefit(
            &record(0, Some(1), 0.1, &d, &c),
            &profile(d.clone(), 30.0),
            &prices,
            BenefitBasis::Normalized,
        )
        .unwrap();
        assert!((b.benefit - 0.05).abs() < 1e-15);

        let b = bill_benefit(
            &record(1, None, f64::INFINITY, &d, &c),
            &profile(d.clone(), 30.0),
            &prices,
            BenefitBasis::Actual,
        )
        .unwrap();
        assert_eq!(b.benefit, 0.0);
        assert!(!b.strategic);

        let bad = ClusterPrices { price: vec![0.2] };
        assert!(bill_benefit(
            &record(0, Some(1), 0.1, &d, &c),
            &profile(d, 30.0),
            &bad,
            BenefitBasis::Actual
        )
        .is_err());
    }

    #[test]
    fn happiness_and_utility() {
        let p = UtilityParams::new(10.0, 2.0).unwrap();
        let d = [0.5, 0.5];
        assert_eq!(happiness(&d, &d, &p).unwrap(), 10.0);
        assert_eq!(happiness(&[0.25, 0.75], &d, &p).unwrap(), 9.0);
        let free = UtilityParams::new(10.0, 0.0).unwrap();
        assert_eq!(happiness(&[1.0, 0.0], &d, &free).unwrap(), 10.0);
        assert!(UtilityParams::new(1.0, -1.0).is_err());

        assert_eq!(utility(&d, 20.0, 0.1, &d, &p).unwrap(), 10.0 - 2.0);
        assert_eq!(utility(&[0.25, 0.75], 20.0, 0.0, &d, &p).unwrap(), 9.0);
        // term by term: 10 - 2·0.5 - 0.3·8
        let u = utility(&[0.25, 0.75], 8.0, 0.3, &d, &p).unwrap();
        assert!((u - (10.0 - 1.0 - 2.4)).abs() < 1e-12);
    }

    #[test]
    fn utility_gain_examples() {
        let d = vec![0.6, 0.4];
        let c = vec![0.1, 0.9];
        let prices = ClusterPrices {
            price: vec![0.3, 0.2],
        };
        let prof = profile(d.clone(), 12.0);
        let rec = record(0, Some(1), 0.4, &d, &c);
        let actual = bill_benefit(&rec, &prof, &prices, BenefitBasis::Actual)
            .unwrap()
            .benefit;

        let zero_c = UtilityParams::new(5.0, 0.0).unwrap();
        assert!((utility_gain(&rec, &prof, &prices, &zero_c).unwrap() - actual).abs() < 1e-12);

        let at_zero = record(0, Some(1), 0.0, &d, &c);
        let some_c = UtilityParams::new(5.0, 3.0).unwrap();
        assert_eq!(
            utility_gain(&at_zero, &prof, &prices, &some_c).unwrap(),
            actual
        );

        let huge = UtilityParams::new(5.0, 1e6).unwrap();
        assert!(utility_gain(&rec, &prof, &prices, &huge).unwrap() < 0.0);

        let none = record(1, None, f64::INFINITY, &d, &c);
        assert!(matches!(
            utility_gain(&none, &prof, &prices, &zero_c),
            Err(Error::NotStrategic(_))
        ));
    }

    #[test]
    fn curves_match_filter_and_average() {
        let d = vec![0.5, 0.5];
        let c = vec![0.0, 1.0];
        let crs = [0.005, 0.02, 0.02, 0.3, f64::INFINITY];
        let homes = [0, 1, 0, 1, 2];
        let records: Vec<_> = crs
            .iter()
            .zip(homes)
            .map(|(&cr, h)| record(h, cr.is_finite().then_some(2), cr, &d, &c))
            .collect();
        let data = Dataset::from_profiles(
            (0..5)
                .map(|i| profile(d.clone(), 10.0 + i as f64))
                .collect(),
        );
        let prices = ClusterPrices {
            price: vec![0.3, 0.25, 0.1],
        };
        let grid = ThetaGrid::from_points(vec![0.0, 0.01, 0.05, 1.0]).unwrap();
        let rows = benefit_curves(&records, &data, &prices, &grid, BenefitBasis::Actual).unwrap();

        let benefit = |i: usize| data.profiles[i].total_energy * (prices.price[homes[i]] - 0.1);
        assert_eq!(rows[0].n_strategic, 0);
        assert_eq!(rows[0].avg_cumulative, 0.0);
        assert_eq!(rows[1].n_strategic, 1);
        assert!((rows[1].avg_cumulative - benefit(0)).abs() < 1e-12);
        assert!((rows[2].avg_marginal - (benefit(1) + benefit(2)) / 2.0).abs() < 1e-12);
        assert!(
            (rows[2].avg_cumulative - (benefit(0) + benefit(1) + benefit(2)) / 3.0).abs() < 1e-12
        );
        let all: f64 = (0..4).map(benefit).sum::<f64>() / 4.0;
        assert_eq!(rows[3].n_strategic, 4);
        assert!((rows[3].avg_cumulative - all).abs() < 1e-12);
        assert!((rows[3].avg_marginal - benefit(3)).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn literal_bill_reduces_to_price_gap(
            raw_d in prop::collection::vec(0.01f64..1.0, 8),
            raw_c in prop::collection::vec(0.01f64..1.0, 8),
            lambda in 0.0f64..=1.0,
            p_home in 0.05f64..0.5,
            gap in 0.0f64..0.05,
            total in 0.1f64..100.0,
        ) {
            let norm = |v: Vec<f64>| { let s: f64 = v.iter().sum(); v.into_iter().map(|x| x / s).collect::<Vec<_>>() };
            let (d, c) = (norm(raw_d), norm(raw_c));
            let prices = ClusterPrices { price: vec![p_home, p_home - gap] };
            let rec = record(0, Some(1), lambda, &d, &c);
            let prof = profile(d.clone(), total);
            for (basis, scale) in [(BenefitBasis::Normalized, 1.0), (BenefitBasis::Actual, total)] {
                let reduced = bill_benefit(&rec, &prof, &prices, basis).unwrap().benefit;
                let literal = literal_bill(p_home, &d, p_home - gap, rec.disguised_weights.as_ref().unwrap(), scale);
                prop_assert!((reduced - literal).abs() <= 1e-12 * scale.max(1.0));
            }
        }
    }
}
