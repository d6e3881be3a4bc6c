//! Sensitive-zone statistics per cluster as the disguise threshold θ varies:
//! how many members can disguise (`N_n(θ)`) and the radius of the stable zone
//! (`r_n(θ)`), the smallest center distance among those members.

use serde::{Deserialize, Serialize};

use crate::clustering::{l1, ClusterModel};
use crate::disguise::DisguiseRecord;
use crate::error::{Error, Result};
use crate::profiles::Dataset;

/// Grid of θ values. Built either from a `start/stop/step` range or from an
/// explicit list of points.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaGrid {
    points: Vec<f64>,
}

impl ThetaGrid {
    pub const DEFAULT_START: f64 = 0.0;
    pub const DEFAULT_STOP: f64 = 0.5;
    pub const DEFAULT_STEP: f64 = 0.005;

    /// `start, start + step, ...` up to and including `stop`.
    pub fn range(start: f64, stop: f64, step: f64) -> Result<Self> {
        if !(start >= 0.0 && start.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "start {start} must be finite and >= 0"
            )));
        }
        if !(stop > start && stop.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "stop {stop} must exceed start {start}"
            )));
        }
        if !(step > 0.0 && step <= stop - start) {
            return Err(Error::InvalidGrid(format!(
                "step {step} must be positive and at most stop - start"
            )));
        }
        // index-based so the points do not accumulate rounding
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        let points = (0..count).map(|i| start + i as f64 * step).collect();
        Ok(ThetaGrid { points })
    }

    /// An explicit, strictly increasing list of non-negative points.
    pub fn from_points(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidGrid("empty grid".into()));
        }
        if points.iter().any(|&p| p.is_nan() || p < 0.0) {
            return Err(Error::InvalidGrid("points must be non-negative".into()));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid(
                "points must be strictly increasing".into(),
            ));
        }
        Ok(ThetaGrid { points })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

impl Default for ThetaGrid {
    fn default() -> Self {
        ThetaGrid::range(Self::DEFAULT_START, Self::DEFAULT_STOP, Self::DEFAULT_STEP)
            .expect("default grid is valid")
    }
}

/// What `r_n(θ)` reports when no member of the cluster can disguise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmptyZone {
    /// The whole cluster is stable: report its full radius.
    #[default]
    #[serde(rename = "full")]
    FullRadius,
    /// Report no value.
    Sentinel,
}

impl std::str::FromStr for EmptyZone {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(EmptyZone::FullRadius),
            "sentinel" => Ok(EmptyZone::Sentinel),
            other => Err(Error::Config(format!(
                "unknown empty-zone convention `{other}`"
            ))),
        }
    }
}

/// One `(θ, cluster)` row. `cluster == None` is the population aggregate.
#[derive(Debug, Clone, PartialEq)]
pub struct ZoneRow {
    pub theta: f64,
    pub cluster: Option<usize>,
    pub n_sensitive: usize,
    pub pct_sensitive: f64,
    /// `None` for aggregate rows, empty clusters and the sentinel convention.
    pub radius: Option<f64>,
}

/// Number of members of cluster `n` with `cr <= theta`.
pub fn n_sensitive(records: &[DisguiseRecord], k: usize, n: usize, theta: f64) -> Result<usize> {
    if n >= k {
        return Err(Error::UnknownCluster(n));
    }
    Ok(records
        .iter()
        .filter(|r| r.home_cluster == n && r.within(theta))
        .count())
}

/// Smallest center distance over members of `n` with `cr <= theta`, or the
/// full cluster radius when there are none.
pub fn stable_radius(
    records: &[DisguiseRecord],
    data: &Dataset,
    model: &ClusterModel,
    n: usize,
    theta: f64,
) -> Result<f64> {
    let full = model.cluster_radius(data, n)?;
    let center = &model.centers[n];
    let strategic = records
        .iter()
        .zip(&data.profiles)
        .filter(|(r, _)| r.home_cluster == n && r.within(theta))
        .map(|(_, p)| l1(&p.weights, center))
        .fold(f64::INFINITY, f64::min);
    Ok(if strategic.is_finite() {
        strategic
    } else {
        full
    })
}

/// One row per `(θ, cluster)` followed by the aggregate row for that θ,
/// ordered by θ then cluster.
pub fn sweep(
    records: &[DisguiseRecord],
    data: &Dataset,
    model: &ClusterModel,
    grid: &ThetaGrid,
    empty: EmptyZone,
) -> Result<Vec<ZoneRow>> {
    if records.len() != data.len() || model.assignment.len() != data.len() {
        return Err(Error::DimensionMismatch {
            expected: data.len(),
            got: records.len(),
        });
    }
    let k = model.k();
    // distance of each profile to its home center, and each cluster's radius
    let dist: Vec<f64> = records
        .iter()
        .zip(&data.profiles)
        .map(|(r, p)| {
            model
                .centers
                .get(r.home_cluster)
                .map(|c| l1(&p.weights, c))
                .ok_or(Error::UnknownCluster(r.home_cluster))
        })
        .collect::<Result<_>>()?;
    let full: Vec<Option<f64>> = (0..k).map(|n| model.cluster_radius(data, n).ok()).collect();

    let total = data.len();
    let mut rows = Vec::with_capacity(grid.len() * (k + 1));
    for &theta in grid.points() {
        let mut count = vec![0usize; k];
        let mut nearest = vec![f64::INFINITY; k];
        for (r, &d) in records.iter().zip(&dist) {
            if r.within(theta) {
                count[r.home_cluster] += 1;
                nearest[r.home_cluster] = nearest[r.home_cluster].min(d);
            }
        }
        for n in 0..k {
            let size = model.sizes[n];
            let radius = match (full[n], count[n]) {
                (None, _) => None,
                (Some(_), c) if c > 0 => Some(nearest[n]),
                (Some(r), _) => match empty {
                    EmptyZone::FullRadius => Some(r),
                    EmptyZone::Sentinel => None,
                },
            };
            rows.push(ZoneRow {
                theta,
                cluster: Some(n),
                n_sensitive: count[n],
                pct_sensitive: if size == 0 {
                    0.0
                } else {
                    count[n] as f64 / size as f64
                },
                radius,
            });
        }
        let all: usize = count.iter().sum();
        rows.push(ZoneRow {
            theta,
            cluster: None,
            n_sensitive: all,
            pct_sensitive: if total == 0 {
                0.0
            } else {
                all as f64 / total as f64
            },
            radius: None,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::NormalizedProfile;

    fn rec(home: usize, cr: f64) -> DisguiseRecord {
        DisguiseRecord {
            profile_id: String::new(),
            home_cluster: home,
            cr,
            target: cr.is_finite().then_some(1 - home.min(1)),
            disguised_weights: None,
        }
    }

    /// Cluster 0 centered at (1, 0) with members at l1 distances
    /// 0.2, 0.6, 1.0, 1.4; cluster 1 centered at (0, 1) with one member.
    fn instance(crs: [f64; 5]) -> (Vec<DisguiseRecord>, Dataset, ClusterModel) {
        let pts = [[0.9, 0.1], [0.7, 0.3], [0.5, 0.5], [0.3, 0.7], [0.0, 1.0]];
        let ds = Dataset::from_profiles(
            pts.iter()
                .enumerate()
                .map(|(i, w)| NormalizedProfile {
                    profile_id: format!("p{i}"),
                    weights: w.to_vec(),
                    total_energy: 1.0,
                })
                .collect(),
        );
        let model = ClusterModel::from_parts(
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![0, 0, 0, 0, 1],
            &ds,
        )
        .unwrap();
        let homes = [0, 0, 0, 0, 1];
        let recs = homes.iter().zip(crs).map(|(&h, c)| rec(h, c)).collect();
        (recs, ds, model)
    }

    #[test]
    fn grid_construction() {
        let g = ThetaGrid::default();
        assert_eq!(g.len(), 101);
        assert_eq!(g.points()[0], 0.0);
        assert!((g.points()[100] - 0.5).abs() < 1e-15);
        assert_eq!(ThetaGrid::range(0.0, 0.1, 0.05).unwrap().len(), 3);
        assert!(ThetaGrid::range(0.2, 0.1, 0.05).is_err());
        assert!(ThetaGrid::range(0.0, 0.1, 0.0).is_err());
        assert!(ThetaGrid::range(-0.1, 0.1, 0.05).is_err());
        assert!(ThetaGrid::from_points(vec![]).is_err());
        assert!(ThetaGrid::from_points(vec![0.1, 0.1]).is_err());
        assert_eq!(ThetaGrid::from_points(vec![0.0]).unwrap().len(), 1);
    }

    #[test]
    fn n_sensitive_examples() {
        let recs = vec![rec(0, 0.1), rec(0, 0.2), rec(0, f64::INFINITY), rec(1, 0.0)];
        assert_eq!(n_sensitive(&recs, 2, 0, 0.15).unwrap(), 1);
        assert_eq!(n_sensitive(&recs, 2, 0, 0.0).unwrap(), 0);
        assert_eq!(n_sensitive(&recs, 2, 1, 0.0).unwrap(), 1);
        assert!(matches!(
            n_sensitive(&recs, 2, 2, 0.1),
            Err(Error::UnknownCluster(2))
        ));
    }

    #[test]
    fn stable_radius_examples() {
        let inf = f64::INFINITY;
        // only the member at distance 0.6 is strategic
        let (recs, ds, model) = instance([inf, 0.05, inf, inf, inf]);
        let r = stable_radius(&recs, &ds, &model, 0, 0.1).unwrap();
        assert!((r - 0.6).abs() < 1e-15);
        // nobody strategic: full radius 1.4
        let r = stable_radius(&recs, &ds, &model, 0, 0.01).unwrap();
        assert!((r - 1.4).abs() < 1e-15);
        assert_eq!(stable_radius(&recs, &ds, &model, 1, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn sweep_rows() {
        let inf = f64::INFINITY;
        let (recs, ds, model) = instance([inf, 0.3, 0.05, inf, 0.2]);
        let grid = ThetaGrid::from_points(vec![0.0, 0.1, 1.0]).unwrap();
        let rows = sweep(&recs, &ds, &model, &grid, EmptyZone::FullRadius).unwrap();
        assert_eq!(rows.len(), 3 * 3);

        // θ = 0: nobody, radii are full radii
        assert_eq!(rows[0].n_sensitive, 0);
        assert!((rows[0].radius.unwrap() - 1.4).abs() < 1e-15);
        assert_eq!(rows[1].radius, Some(0.0));
        assert_eq!(rows[2].cluster, None);

        // θ = 0.1: the member at 1.0
        assert_eq!(rows[3].n_sensitive, 1);
        assert_eq!(rows[3].pct_sensitive, 0.25);
        assert!((rows[3].radius.unwrap() - 1.0).abs() < 1e-15);

        // θ = 1: every finite-cr member
        assert_eq!(rows[6].n_sensitive, 2);
        assert_eq!(rows[7].n_sensitive, 1);
        assert_eq!(rows[8].n_sensitive, 3);
        assert_eq!(rows[8].pct_sensitive, 0.6);
        assert!((rows[6].radius.unwrap() - 0.6).abs() < 1e-15);

        // each row agrees with the single-point operations
        for row in rows.iter().filter(|r| r.cluster.is_some()) {
            let n = row.cluster.unwrap();
            assert_eq!(
                row.n_sensitive,
                n_sensitive(&recs, 2, n, row.theta).unwrap()
            );
            assert_eq!(
                row.radius.unwrap(),
                stable_radius(&recs, &ds, &model, n, row.theta).unwrap()
            );
        }

        let rows = sweep(&recs, &ds, &model, &grid, EmptyZone::Sentinel).unwrap();
        assert_eq!(rows[0].radius, None);
    }
}
