//! Lloyd-style clustering of normalized profiles under the l1 metric.
//!
//! Centers are updated either by the coordinate-wise median (k-medians, the
//! minimizer of the l1 objective) or by the mean, and are re-normalized to unit
//! l1 sum after every update. Seeding is greedy farthest-point from a seeded
//! random first pick, so a fit is reproducible bit-for-bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profiles::Dataset;

pub const DEFAULT_K: usize = 30;
pub const DEFAULT_MAX_ITERS: usize = 300;
pub const DEFAULT_TOL: f64 = 1e-10;

/// Sum of absolute coordinate differences; errors on length mismatch.
pub fn l1_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(l1(a, b))
}

#[inline]
pub(crate) fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CenterUpdate {
    #[default]
    Median,
    Mean,
}

impl std::str::FromStr for CenterUpdate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "median" => Ok(CenterUpdate::Median),
            "mean" => Ok(CenterUpdate::Mean),
            other => Err(Error::Config(format!("unknown center update `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub seed: u64,
    pub max_iters: usize,
    /// Stop once the objective improves by less than this (absolute).
    pub tol: f64,
    pub center_update: CenterUpdate,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            seed: 0,
            max_iters: DEFAULT_MAX_ITERS,
            tol: DEFAULT_TOL,
            center_update: CenterUpdate::Median,
        }
    }
}

/// A fitted partition: `assignment[i]` is the cluster of profile `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub centers: Vec<Vec<f64>>,
    pub assignment: Vec<usize>,
    pub sizes: Vec<usize>,
    /// Total l1 distance of members to their centers.
    pub objective: f64,
    pub iterations: usize,
    /// Objective after each assignment pass.
    pub objective_trace: Vec<f64>,
}

impl ClusterModel {
    /// Rebuilds a model from stored centers and assignments, recomputing sizes
    /// and the objective against `data`.
    pub fn from_parts(
        centers: Vec<Vec<f64>>,
        assignment: Vec<usize>,
        data: &Dataset,
    ) -> Result<Self> {
        if assignment.len() != data.len() {
            return Err(Error::DimensionMismatch {
                expected: data.len(),
                got: assignment.len(),
            });
        }
        let k = centers.len();
        let mut sizes = vec![0; k];
        let mut objective = 0.0;
        for (p, &a) in data.profiles.iter().zip(&assignment) {
            let c = centers.get(a).ok_or(Error::UnknownCluster(a))?;
            objective += l1_distance(&p.weights, c)?;
            sizes[a] += 1;
        }
        Ok(ClusterModel {
            centers,
            assignment,
            sizes,
            objective,
            iterations: 0,
            objective_trace: vec![objective],
        })
    }

    pub fn k(&self) -> usize {
        self.centers.len()
    }

    pub fn hours(&self) -> usize {
        self.centers.first().map_or(0, Vec::len)
    }

    /// Nearest center under l1; ties go to the lowest index.
    pub fn assign(&self, weights: &[f64]) -> Result<usize> {
        if weights.len() != self.hours() {
            return Err(Error::DimensionMismatch {
                expected: self.hours(),
                got: weights.len(),
            });
        }
        Ok(nearest(weights, &self.centers).0)
    }

    /// Indices of the profiles assigned to cluster `n`.
    pub fn members(&self, n: usize) -> impl Iterator<Item = usize> + '_ {
        self.assignment
            .iter()
            .enumerate()
            .filter(move |(_, &a)| a == n)
            .map(|(i, _)| i)
    }

    /// Largest member distance to the center of cluster `n`.
    pub fn cluster_radius(&self, data: &Dataset, n: usize) -> Result<f64> {
        let center = self.centers.get(n).ok_or(Error::UnknownCluster(n))?;
        if self.sizes[n] == 0 {
            return Err(Error::EmptyCluster(n));
        }
        Ok(self
            .members(n)
            .map(|i| l1(&data.profiles[i].weights, center))
            .fold(0.0, f64::max))
    }
}

fn nearest(p: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.iter().enumerate() {
        let d = l1(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

pub fn fit(data: &Dataset, k: usize, config: &FitConfig) -> Result<ClusterModel> {
    let points = data.weights();
    fit_points(&points, k, config)
}

/// Clusters raw unit-sum vectors; see [`fit`].
pub fn fit_points(points: &[&[f64]], k: usize, config: &FitConfig) -> Result<ClusterModel> {
    let n = points.len();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if k == 0 {
        return Err(Error::InvalidConfig("k must be positive".into()));
    }
    if k > n {
        return Err(Error::TooManyClusters { k, n });
    }
    if config.max_iters == 0 {
        return Err(Error::InvalidConfig("max_iters must be at least 1".into()));
    }
    let hours = points[0].len();
    if let Some(p) = points.iter().find(|p| p.len() != hours) {
        return Err(Error::DimensionMismatch {
            expected: hours,
            got: p.len(),
        });
    }

    let mut centers = seed_centers(points, k, config.seed);
    let mut assignment = vec![usize::MAX; n];
    let mut trace = Vec::new();
    let mut prev = f64::INFINITY;
    let mut iterations = 0;

    loop {
        iterations += 1;
        let nearest_all: Vec<(usize, f64)> =
            points.par_iter().map(|p| nearest(p, &centers)).collect();
        let objective: f64 = nearest_all.iter().map(|&(_, d)| d).sum();
        let next: Vec<usize> = nearest_all.iter().map(|&(j, _)| j).collect();
        trace.push(objective);

        let unchanged = next == assignment;
        let stalled = prev.is_finite() && prev - objective < config.tol;
        assignment = next;
        if unchanged || stalled || iterations >= config.max_iters {
            break;
        }
        prev = objective;

        reseed_empty(points, &centers, &mut assignment, k);
        centers = update_centers(points, &assignment, &centers, config.center_update);
    }

    let mut sizes = vec![0; k];
    for &a in &assignment {
        sizes[a] += 1;
    }
    Ok(ClusterModel {
        centers,
        objective: *trace.last().unwrap(),
        assignment,
        sizes,
        iterations,
        objective_trace: trace,
    })
}

fn seed_centers(points: &[&[f64]], k: usize, seed: u64) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = rng.random_range(0..n);
    let mut chosen = vec![first];
    let mut min_dist: Vec<f64> = points.iter().map(|p| l1(p, points[first])).collect();
    while chosen.len() < k {
        let mut best = None;
        let mut best_d = 0.0;
        for (i, &d) in min_dist.iter().enumerate() {
            if d > best_d {
                best_d = d;
                best = Some(i);
            }
        }
        // Only duplicates of chosen points remain; take the first unused index.
        let next = best.unwrap_or_else(|| (0..n).find(|i| !chosen.contains(i)).unwrap());
        chosen.push(next);
        for (i, p) in points.iter().enumerate() {
            let d = l1(p, points[next]);
            if d < min_dist[i] {
                min_dist[i] = d;
            }
        }
    }
    chosen.into_iter().map(|i| points[i].to_vec()).collect()
}

/// Moves the member farthest from its current center into each empty cluster.
fn reseed_empty(points: &[&[f64]], centers: &[Vec<f64>], assignment: &mut [usize], k: usize) {
    let mut sizes = vec![0usize; k];
    for &a in assignment.iter() {
        sizes[a] += 1;
    }
    for j in 0..k {
        if sizes[j] > 0 {
            continue;
        }
        let mut donor = None;
        let mut far = -1.0;
        for (i, p) in points.iter().enumerate() {
            let a = assignment[i];
            if sizes[a] <= 1 {
                continue;
            }
            let d = l1(p, &centers[a]);
            if d > far {
                far = d;
                donor = Some(i);
            }
        }
        if let Some(i) = donor {
            sizes[assignment[i]] -= 1;
            assignment[i] = j;
            sizes[j] = 1;
        }
    }
}

fn update_centers(
    points: &[&[f64]],
    assignment: &[usize],
    old: &[Vec<f64>],
    rule: CenterUpdate,
) -> Vec<Vec<f64>> {
    let k = old.len();
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &a) in assignment.iter().enumerate() {
        groups[a].push(i);
    }
    groups
        .par_iter()
        .enumerate()
        .map(|(j, members)| {
            if members.is_empty() {
                return old[j].clone();
            }
            let center = match rule {
                CenterUpdate::Median => coordinate_median(points, members),
                CenterUpdate::Mean => coordinate_mean(points, members),
            };
            renormalize(center).unwrap_or_else(|| {
                renormalize(coordinate_mean(points, members)).expect("members are unit-sum")
            })
        })
        .collect()
}

fn coordinate_mean(points: &[&[f64]], members: &[usize]) -> Vec<f64> {
    let hours = points[0].len();
    let mut c = vec![0.0; hours];
    for &i in members {
        for (x, y) in c.iter_mut().zip(points[i].iter()) {
            *x += y;
        }
    }
    let m = members.len() as f64;
    c.iter_mut().for_each(|x| *x /= m);
    c
}

fn coordinate_median(points: &[&[f64]], members: &[usize]) -> Vec<f64> {
    let hours = points[0].len();
    let mut column = Vec::with_capacity(members.len());
    (0..hours)
        .map(|t| {
            column.clear();
            column.extend(members.iter().map(|&i| points[i][t]));
            column.sort_by(f64::total_cmp);
            let m = column.len();
            if m % 2 == 1 {
                column[m / 2]
            } else {
                0.5 * (column[m / 2 - 1] + column[m / 2])
            }
        })
        .collect()
}

/// Scales to unit l1 sum; `None` for an all-zero vector.
fn renormalize(mut v: Vec<f64>) -> Option<Vec<f64>> {
    let s: f64 = v.iter().sum();
    if s <= 0.0 {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= s);
    Some(v)
}
