//! Minimal-effort disguise: how far a profile has to move along the segment
//! toward a cheaper cluster's center before it is classified into that cluster.
//!
//! For a profile `d`, home center `h` and target center `c`, the modified
//! profile at effort `λ` is `(1-λ)d + λc`. The switch succeeds when
//!
//! ```text
//! ||(1-λ)d + λc - h||₁ >= ||(1-λ)(d - c)||₁
//! ```
//!
//! Writing `a = d - h`, `v = c - d` and `D = ||d - c||₁`, the margin
//! `f(λ) = ||a + λv||₁ - (1-λ)D` is convex and piecewise linear with kinks at
//! `-a_t / v_t`, and `f(1) = ||c - h||₁ >= 0`. The smallest feasible `λ` is found
//! exactly by walking the sorted kinks and solving the linear piece that
//! crosses zero.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{l1, ClusterModel};
use crate::error::{Error, Result};
use crate::pricing::ClusterPrices;
use crate::profiles::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SwitchRule {
    /// Compare the modified profile with the home center only.
    #[default]
    Paper,
    /// Require the modified profile to be at least as close to the target as
    /// to every other center.
    Strict,
}

impl std::str::FromStr for SwitchRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(SwitchRule::Paper),
            "strict" => Ok(SwitchRule::Strict),
            other => Err(Error::Config(format!("unknown switch rule `{other}`"))),
        }
    }
}

/// Minimal effort toward one target cluster.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffortResult {
    /// In `[0, 1]`, or `+inf` when the target is not reachable.
    pub lambda_star: f64,
    pub target: usize,
    pub feasible: bool,
}

/// Per-profile disguise outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct DisguiseRecord {
    pub profile_id: String,
    pub home_cluster: usize,
    /// Minimal effort over all cheaper clusters; `+inf` if there is none.
    pub cr: f64,
    pub target: Option<usize>,
    /// The modified profile at `λ = cr`.
    pub disguised_weights: Option<Vec<f64>>,
}

impl DisguiseRecord {
    pub fn is_finite(&self) -> bool {
        self.cr.is_finite()
    }

    /// True when the profile can disguise at threshold `theta`.
    pub fn within(&self, theta: f64) -> bool {
        self.cr <= theta
    }
}

fn check_dims(expected: usize, others: &[&[f64]]) -> Result<()> {
    for o in others {
        if o.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: o.len(),
            });
        }
    }
    Ok(())
}

/// Evaluates the switch inequality literally at effort `lambda`.
pub fn switch_condition(d: &[f64], c_home: &[f64], c_target: &[f64], lambda: f64) -> Result<bool> {
    check_dims(d.len(), &[c_home, c_target])?;
    let (lhs, rhs) = switch_sides(d, c_home, c_target, lambda);
    Ok(lhs >= rhs)
}

fn switch_sides(d: &[f64], c_home: &[f64], c_target: &[f64], lambda: f64) -> (f64, f64) {
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for t in 0..d.len() {
        lhs += ((1.0 - lambda) * d[t] + lambda * c_target[t] - c_home[t]).abs();
        rhs += ((1.0 - lambda) * (d[t] - c_target[t])).abs();
    }
    (lhs, rhs)
}

/// The margin `g(λ) = ||a + λv||₁ - (1-λ)D` for a profile moving toward a
/// target, measured against one competing center.
#[derive(Debug, Clone)]
pub struct Margin {
    a: Vec<f64>,
    v: Vec<f64>,
    dist: f64,
}

impl Margin {
    /// Margin of `d` moving toward `c_target`, measured against `c_other`.
    pub fn new(d: &[f64], c_other: &[f64], c_target: &[f64]) -> Self {
        let a = d.iter().zip(c_other).map(|(x, y)| x - y).collect();
        let v = c_target.iter().zip(d).map(|(x, y)| x - y).collect();
        Margin {
            a,
            v,
            dist: l1(d, c_target),
        }
    }

    pub fn eval(&self, lambda: f64) -> f64 {
        let moved: f64 = self
            .a
            .iter()
            .zip(&self.v)
            .map(|(a, v)| (a + lambda * v).abs())
            .sum();
        moved - (1.0 - lambda) * self.dist
    }

    /// Kinks strictly inside `(0, 1)` plus both endpoints, sorted.
    fn knots(&self) -> Vec<f64> {
        let mut k: Vec<f64> = self
            .a
            .iter()
            .zip(&self.v)
            .filter(|(_, &v)| v != 0.0)
            .map(|(a, v)| -a / v)
            .filter(|&x| x > 0.0 && x < 1.0)
            .collect();
        k.push(0.0);
        k.push(1.0);
        k.sort_by(f64::total_cmp);
        k.dedup();
        k
    }

    /// Zero of the linear piece of `g` spanning `[lo, hi]`, clamped to it.
    fn segment_root(&self, lo: f64, hi: f64) -> f64 {
        let mid = 0.5 * (lo + hi);
        // Sum the |a + λv| piece on its own, in the same order as `dist`, so
        // that d = c_other gives slope exactly 2·dist and a root of exactly 1/2.
        let (mut sa, mut sv) = (0.0, 0.0);
        for (a, v) in self.a.iter().zip(&self.v) {
            let s = (a + mid * v).signum();
            if a + mid * v != 0.0 {
                sa += s * a;
                sv += s * v;
            }
        }
        let intercept = sa - self.dist;
        let slope = sv + self.dist;
        if slope == 0.0 {
            return if intercept >= 0.0 { lo } else { hi };
        }
        (-intercept / slope).clamp(lo, hi)
    }

    /// The open sub-interval of `[0, 1]` where the margin is negative, as
    /// `(start, end)`. `start` is `-inf` when the margin is already negative
    /// at zero. `None` when the margin is non-negative everywhere.
    pub fn negative_interval(&self) -> Option<(f64, f64)> {
        let knots = self.knots();
        let values: Vec<f64> = knots.iter().map(|&x| self.eval(x)).collect();
        let first = values.iter().position(|&g| g < 0.0)?;
        let last = values.iter().rposition(|&g| g < 0.0).unwrap();
        let start = if first == 0 {
            f64::NEG_INFINITY
        } else {
            self.segment_root(knots[first - 1], knots[first])
        };
        // g(1) = ||c_target - c_other||₁ >= 0, so a knot after `last` exists.
        let end = match knots.get(last + 1) {
            Some(&hi) => self.segment_root(knots[last], hi),
            None => 1.0,
        };
        Some((start, end))
    }
}

/// Smallest `λ` in `[0, 1]` satisfying the switch condition toward `c_target`.
pub fn min_effort(d: &[f64], c_home: &[f64], c_target: &[f64]) -> Result<f64> {
    check_dims(d.len(), &[c_home, c_target])?;
    if switch_condition(d, c_home, c_target, 0.0)? {
        return Ok(0.0);
    }
    let margin = Margin::new(d, c_home, c_target);
    Ok(match margin.negative_interval() {
        Some((_, end)) => end,
        None => 0.0,
    })
}

/// Smallest `λ` at which `(1-λ)d + λc_target` is at least as close to the
/// target center as to every other center.
pub fn strict_effort(d: &[f64], centers: &[Vec<f64>], target: usize) -> Result<f64> {
    let c_target = centers.get(target).ok_or(Error::UnknownCluster(target))?;
    check_dims(d.len(), &[c_target])?;
    let mut blocked = Vec::new();
    for (m, c) in centers.iter().enumerate() {
        if m == target {
            continue;
        }
        check_dims(d.len(), &[c])?;
        if let Some(iv) = Margin::new(d, c, c_target).negative_interval() {
            blocked.push(iv);
        }
    }
    // Push λ past every open interval that still contains it; λ only grows
    // and each interval ends by λ = 1.
    let mut lambda: f64 = 0.0;
    loop {
        let mut moved = false;
        for &(start, end) in &blocked {
            if start < lambda && lambda < end {
                lambda = end;
                moved = true;
            }
        }
        if !moved {
            return Ok(lambda);
        }
    }
}

/// `(1-λ)d + λc_target`.
pub fn disguised_profile(d: &[f64], c_target: &[f64], lambda: f64) -> Result<Vec<f64>> {
    check_dims(d.len(), &[c_target])?;
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::LambdaOutOfRange(lambda));
    }
    Ok(mix(d, c_target, lambda))
}

pub(crate) fn mix(d: &[f64], c: &[f64], lambda: f64) -> Vec<f64> {
    d.iter()
        .zip(c)
        .map(|(x, y)| (1.0 - lambda) * x + lambda * y)
        .collect()
}

/// Effort of profile weights `d` (assigned to `home`) toward every cheaper
/// cluster; the best one by effort, then price, then index.
pub fn best_target(
    d: &[f64],
    home: usize,
    model: &ClusterModel,
    prices: &ClusterPrices,
    rule: SwitchRule,
) -> Result<Option<EffortResult>> {
    let home_price = prices.get(home)?;
    let c_home = model.centers.get(home).ok_or(Error::UnknownCluster(home))?;
    let mut best: Option<(EffortResult, f64)> = None;
    for (n, c) in model.centers.iter().enumerate() {
        let price = prices.get(n)?;
        if n == home || price >= home_price {
            continue;
        }
        let lambda = match rule {
            SwitchRule::Paper => min_effort(d, c_home, c)?,
            SwitchRule::Strict => strict_effort(d, &model.centers, n)?,
        };
        let better = match &best {
            None => true,
            Some((b, bp)) => lambda < b.lambda_star || (lambda == b.lambda_star && price < *bp),
        };
        if better {
            best = Some((
                EffortResult {
                    lambda_star: lambda,
                    target: n,
                    feasible: true,
                },
                price,
            ));
        }
    }
    Ok(best.map(|(e, _)| e))
}

/// Disguise record for profile `i`.
pub fn compute_cr(
    i: usize,
    data: &Dataset,
    model: &ClusterModel,
    prices: &ClusterPrices,
    rule: SwitchRule,
) -> Result<DisguiseRecord> {
    let profile = data.profiles.get(i).ok_or(Error::InvalidProfileIndex(i))?;
    let home = *model
        .assignment
        .get(i)
        .ok_or(Error::InvalidProfileIndex(i))?;
    let d = &profile.weights;
    Ok(match best_target(d, home, model, prices, rule)? {
        Some(e) => {
            let target = &model.centers[e.target];
            DisguiseRecord {
                profile_id: profile.profile_id.clone(),
                home_cluster: home,
                cr: e.lambda_star,
                target: Some(e.target),
                disguised_weights: Some(mix(d, target, e.lambda_star)),
            }
        }
        None => DisguiseRecord {
            profile_id: profile.profile_id.clone(),
            home_cluster: home,
            cr: f64::INFINITY,
            target: None,
            disguised_weights: None,
        },
    })
}

/// Records for every profile, in profile order.
pub fn compute_all(
    data: &Dataset,
    model: &ClusterModel,
    prices: &ClusterPrices,
    rule: SwitchRule,
) -> Result<Vec<DisguiseRecord>> {
    (0..data.len())
        .into_par_iter()
        .map(|i| compute_cr(i, data, model, prices, rule))
        .collect()
}

/// Counts of profiles with `cr <= theta`, keyed by `(home, target)`.
pub fn trajectories(
    records: &[DisguiseRecord],
    theta: f64,
) -> Result<BTreeMap<(usize, usize), usize>> {
    if theta.is_nan() || theta < 0.0 {
        return Err(Error::NegativeTheta(theta));
    }
    let mut out = BTreeMap::new();
    for r in records.iter().filter(|r| r.within(theta)) {
        if let Some(t) = r.target {
            *out.entry((r.home_cluster, t)).or_insert(0) += 1;
        }
    }
    Ok(out)
}
