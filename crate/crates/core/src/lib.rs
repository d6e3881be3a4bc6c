//! Cluster-oriented electricity pricing and its vulnerability to disguising.
//!
//! Daily load profiles are l1-normalized and clustered under the l1 metric;
//! each cluster is priced at the MCI (price-weighted sum) of its center. A
//! consumer can *disguise* by moving its profile part of the way toward a
//! cheaper cluster's center. The crate computes the minimal effort (`CR`) for
//! every profile and the derived sensitive-zone, benefit and system-load
//! sweeps over the effort threshold θ.
//!
//! Modules follow the pipeline order:
//! [`profiles`] → [`clustering`] → [`pricing`] → [`disguise`] → [`zones`],
//! [`economics`], [`sysload`]; [`pipeline`] wires them together and [`report`]
//! owns the file formats.

pub mod clustering;
pub mod disguise;
pub mod economics;
pub mod error;
pub mod numfmt;
pub mod pipeline;
pub mod pricing;
pub mod profiles;
pub mod report;
pub mod sysload;
pub mod zones;

pub use clustering::{fit, l1_distance, CenterUpdate, ClusterModel, FitConfig};
pub use disguise::{
    compute_all, compute_cr, disguised_profile, min_effort, strict_effort, switch_condition,
    trajectories, DisguiseRecord, EffortResult, SwitchRule,
};
pub use economics::{BenefitBasis, BenefitCurveRow, BenefitRecord, UtilityParams};
pub use error::{Error, Result};
pub use pipeline::{run, run_stage, Manifest, RunConfig, Stage};
pub use pricing::{mci, price_clusters, ClusterPrices, PriceCurve};
pub use profiles::{normalize, Dataset, LoadProfile, NormalizedProfile};
pub use sysload::{DisguiseExtent, SystemLoadRow};
pub use zones::{EmptyZone, ThetaGrid, ZoneRow};
