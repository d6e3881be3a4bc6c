//! End-to-end orchestration: ingest → cluster → price → disguise → zones →
//! economics → sysload, either in one pass ([`run`]) or one stage at a time
//! ([`run_stage`]) with each stage reading the files the previous one wrote.
//!
//! Values that cross a stage boundary are rounded to the report precision in
//! both modes, so staged and monolithic runs emit byte-identical reports.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::clustering::{self, CenterUpdate, ClusterModel, FitConfig};
use crate::disguise::{self, mix, DisguiseRecord, SwitchRule};
use crate::economics::{self, BenefitBasis, UtilityParams};
use crate::error::{Error, Result};
use crate::numfmt::quantize;
use crate::pricing::{self, ClusterPrices, PriceCurve};
use crate::profiles::{self, Dataset};
use crate::report;
use crate::sysload::{self, DisguiseExtent};
use crate::zones::{self, EmptyZone, ThetaGrid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            start: ThetaGrid::DEFAULT_START,
            stop: ThetaGrid::DEFAULT_STOP,
            step: ThetaGrid::DEFAULT_STEP,
        }
    }
}

impl GridSpec {
    pub fn build(&self) -> Result<ThetaGrid> {
        ThetaGrid::range(self.start, self.stop, self.step)
    }
}

/// Everything a run needs. Loadable from TOML; every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub profiles_path: Option<PathBuf>,
    pub prices_path: Option<PathBuf>,
    /// Use the built-in synthetic two-peak curve instead of a prices file.
    pub synthetic_prices: bool,
    pub k: usize,
    pub seed: u64,
    pub hours: usize,
    pub center_update: CenterUpdate,
    pub max_iters: usize,
    pub tol: f64,
    pub switch_rule: SwitchRule,
    pub benefit_basis: BenefitBasis,
    pub disguise_extent: DisguiseExtent,
    pub empty_zone: EmptyZone,
    pub theta_grid: GridSpec,
    pub utility: Option<UtilityParams>,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            profiles_path: None,
            prices_path: None,
            synthetic_prices: false,
            k: clustering::DEFAULT_K,
            seed: 0,
            hours: profiles::DEFAULT_HOURS,
            center_update: CenterUpdate::Median,
            max_iters: clustering::DEFAULT_MAX_ITERS,
            tol: clustering::DEFAULT_TOL,
            switch_rule: SwitchRule::Paper,
            benefit_basis: BenefitBasis::Actual,
            disguise_extent: DisguiseExtent::Cr,
            empty_zone: EmptyZone::FullRadius,
            theta_grid: GridSpec::default(),
            utility: None,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            seed: self.seed,
            max_iters: self.max_iters,
            tol: self.tol,
            center_update: self.center_update,
        }
    }

    /// Checks parameters and that referenced inputs exist. Missing files are
    /// reported under the stage that reads them.
    pub fn validate(&self) -> Result<ThetaGrid> {
        if self.k == 0 {
            return Err(Error::Config("k must be positive".into()));
        }
        if self.hours == 0 {
            return Err(Error::Config("hours must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        if let Some(u) = self.utility {
            UtilityParams::new(u.u_max, u.c)?;
        }
        let grid = self.theta_grid.build().map_err(|e| e.in_stage("config"))?;
        let profiles = self
            .profiles_path
            .as_ref()
            .ok_or_else(|| Error::MissingInput("profiles path".into()).in_stage("ingest"))?;
        if !profiles.is_file() {
            return Err(
                Error::MissingInput(format!("profiles file {}", profiles.display()))
                    .in_stage("ingest"),
            );
        }
        self.check_prices()?;
        Ok(grid)
    }

    fn check_prices(&self) -> Result<()> {
        if self.synthetic_prices {
            return Ok(());
        }
        match &self.prices_path {
            None => Err(
                Error::MissingInput("prices path (or synthetic prices flag)".into())
                    .in_stage("pricing"),
            ),
            Some(p) if !p.is_file() => {
                Err(Error::MissingInput(format!("prices file {}", p.display())).in_stage("pricing"))
            }
            Some(_) => Ok(()),
        }
    }

    pub fn price_curve(&self) -> Result<PriceCurve> {
        if self.synthetic_prices {
            return Ok(PriceCurve::synthetic_two_peak(self.hours));
        }
        let path = self
            .prices_path
            .as_ref()
            .ok_or_else(|| Error::MissingInput("prices path (or synthetic prices flag)".into()))?;
        pricing::load_price_curve(path, self.hours)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub input_rows: usize,
    pub profiles: usize,
    pub rejected: usize,
    pub clusters: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub sha256: String,
    /// Data rows, excluding the header.
    pub rows: usize,
}

/// `manifest.json`: config echo, dataset counts, per-file checksums and
/// per-stage wall-clock timings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: Option<RunConfig>,
    pub counts: Counts,
    pub files: BTreeMap<String, FileEntry>,
    pub timings_ms: BTreeMap<String, f64>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Incompatible {
            file: report::MANIFEST.into(),
            reason: e.to_string(),
        })
    }

    fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Tracks files written by one invocation so they can be removed on failure.
struct Emitter {
    dir: PathBuf,
    written: Vec<PathBuf>,
    manifest: Manifest,
}

impl Emitter {
    fn new(dir: &Path, manifest: Manifest) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Emitter {
            dir: dir.to_path_buf(),
            written: Vec::new(),
            manifest,
        })
    }

    fn emit(&mut self, name: &str, write: impl FnOnce(&Path) -> Result<usize>) -> Result<()> {
        let path = self.dir.join(name);
        self.written.push(path.clone());
        let rows = write(&path)?;
        let sha256 = sha256_file(&path)?;
        self.manifest
            .files
            .insert(name.to_string(), FileEntry { sha256, rows });
        Ok(())
    }

    /// Reads a prior stage's file after checking it against the manifest.
    fn verified(&self, name: &str) -> Result<PathBuf> {
        let path = self.dir.join(name);
        if !path.is_file() {
            return Err(Error::MissingInput(name.to_string()));
        }
        if let Some(entry) = self.manifest.files.get(name) {
            let actual = sha256_file(&path)?;
            if actual != entry.sha256 {
                return Err(Error::ChecksumMismatch {
                    file: name.to_string(),
                    expected: entry.sha256.clone(),
                    actual,
                });
            }
        }
        Ok(path)
    }

    fn finish(mut self) -> Result<Manifest> {
        let path = self.dir.join(report::MANIFEST);
        self.written.push(path.clone());
        self.manifest.save(&path)?;
        Ok(self.manifest)
    }

    fn discard(self) {
        for p in self.written {
            let _ = fs::remove_file(p);
        }
    }
}

fn timed<T>(
    timings: &mut BTreeMap<String, f64>,
    stage: &'static str,
    f: impl FnOnce() -> Result<T>,
) -> Result<T> {
    let start = Instant::now();
    let out = f().map_err(|e| e.in_stage(stage))?;
    timings.insert(stage.to_string(), start.elapsed().as_secs_f64() * 1e3);
    Ok(out)
}

fn ingest(cfg: &RunConfig) -> Result<(Dataset, usize)> {
    let path = cfg
        .profiles_path
        .as_ref()
        .ok_or_else(|| Error::MissingInput("profiles path".into()))?;
    let raw = profiles::read_profiles_csv(path, cfg.hours)?;
    let profiles = raw
        .profiles
        .iter()
        .map(profiles::normalize)
        .collect::<Result<Vec<_>>>()?;
    Ok((
        Dataset {
            profiles,
            rejected: raw.rejected,
        },
        raw.rows,
    ))
}

/// Fits and rounds the centers to report precision.
pub fn cluster_step(cfg: &RunConfig, data: &Dataset) -> Result<ClusterModel> {
    let fitted = clustering::fit(data, cfg.k, &cfg.fit_config())?;
    let centers = fitted
        .centers
        .iter()
        .map(|c| c.iter().map(|&x| quantize(x)).collect())
        .collect();
    let mut model = ClusterModel::from_parts(centers, fitted.assignment, data)?;
    model.iterations = fitted.iterations;
    Ok(model)
}

pub fn price_step(model: &ClusterModel, curve: &PriceCurve) -> Result<ClusterPrices> {
    let prices = pricing::price_clusters(model, curve)?;
    Ok(ClusterPrices {
        price: prices.price.into_iter().map(quantize).collect(),
    })
}

/// Rebuilds a record from a rounded effort, recomputing the disguised profile.
fn settle(
    data: &Dataset,
    model: &ClusterModel,
    i: usize,
    home: usize,
    cr: f64,
    target: Option<usize>,
) -> Result<DisguiseRecord> {
    let p = &data.profiles[i];
    let disguised_weights = match target {
        Some(t) => {
            let c = model.centers.get(t).ok_or(Error::UnknownCluster(t))?;
            Some(mix(&p.weights, c, cr))
        }
        None => None,
    };
    Ok(DisguiseRecord {
        profile_id: p.profile_id.clone(),
        home_cluster: home,
        cr,
        target,
        disguised_weights,
    })
}

pub fn disguise_step(
    cfg: &RunConfig,
    data: &Dataset,
    model: &ClusterModel,
    prices: &ClusterPrices,
) -> Result<Vec<DisguiseRecord>> {
    let exact = disguise::compute_all(data, model, prices, cfg.switch_rule)?;
    exact
        .into_iter()
        .enumerate()
        .map(|(i, r)| settle(data, model, i, r.home_cluster, quantize(r.cr), r.target))
        .collect()
}

fn records_from_rows(
    rows: Vec<report::CrRow>,
    data: &Dataset,
    model: &ClusterModel,
) -> Result<Vec<DisguiseRecord>> {
    let bad = |reason: String| Error::Incompatible {
        file: report::CR.into(),
        reason,
    };
    if rows.len() != data.len() {
        return Err(bad(format!(
            "{} rows for {} profiles",
            rows.len(),
            data.len()
        )));
    }
    rows.into_iter()
        .enumerate()
        .map(|(i, row)| {
            if row.profile_id != data.profiles[i].profile_id
                || row.home_cluster != model.assignment[i]
            {
                return Err(bad(format!("row {} does not match the clustering", i + 1)));
            }
            settle(data, model, i, row.home_cluster, row.cr, row.target)
        })
        .collect()
}

fn utility_rows(
    records: &[DisguiseRecord],
    data: &Dataset,
    prices: &ClusterPrices,
    params: &UtilityParams,
) -> Result<Vec<(String, Option<f64>)>> {
    records
        .iter()
        .zip(&data.profiles)
        .map(|(r, p)| {
            let gain = if r.cr.is_finite() {
                Some(economics::utility_gain(r, p, prices, params)?)
            } else {
                None
            };
            Ok((r.profile_id.clone(), gain))
        })
        .collect()
}

fn counts(data: &Dataset, rows: usize, model: Option<&ClusterModel>) -> Counts {
    Counts {
        input_rows: rows,
        profiles: data.len(),
        rejected: data.rejected.len(),
        clusters: model.map_or(0, ClusterModel::k),
    }
}

/// Runs every stage and writes all reports plus `manifest.json` into
/// `cfg.output_dir`. On failure, files written by this call are removed.
pub fn run(cfg: &RunConfig) -> Result<Manifest> {
    let grid = cfg.validate()?;
    let mut out = Emitter::new(
        &cfg.output_dir,
        Manifest {
            config: Some(cfg.clone()),
            ..Manifest::default()
        },
    )?;
    match run_all(cfg, &grid, &mut out) {
        Ok(()) => out.finish().map_err(|e| e.in_stage("report")),
        Err(e) => {
            out.discard();
            Err(e)
        }
    }
}

fn run_all(cfg: &RunConfig, grid: &ThetaGrid, out: &mut Emitter) -> Result<()> {
    let mut t = BTreeMap::new();
    let (data, rows) = timed(&mut t, "ingest", || ingest(cfg))?;
    timed(&mut t, "ingest", || {
        out.emit(report::REJECTED, |p| {
            profiles::write_rejected_csv(p, &data.rejected).map(|_| data.rejected.len())
        })
    })?;

    let model = timed(&mut t, "clustering", || {
        let model = cluster_step(cfg, &data)?;
        out.emit(report::CENTERS, |p| report::write_centers(p, &model))?;
        out.emit(report::ASSIGNMENTS, |p| {
            report::write_assignments(p, &data, &model)
        })?;
        Ok(model)
    })?;

    let prices = timed(&mut t, "pricing", || {
        let prices = price_step(&model, &cfg.price_curve()?)?;
        out.emit(report::CLUSTER_PRICES, |p| {
            report::write_cluster_prices(p, &prices)
        })?;
        Ok(prices)
    })?;

    let records = timed(&mut t, "disguise", || {
        let records = disguise_step(cfg, &data, &model, &prices)?;
        out.emit(report::CR, |p| report::write_cr(p, &records))?;
        out.emit(report::TRAJECTORIES, |p| {
            report::write_trajectories(p, &records, grid)
        })?;
        Ok(records)
    })?;

    timed(&mut t, "zones", || {
        emit_zones(cfg, grid, &data, &model, &records, out)
    })?;
    timed(&mut t, "economics", || {
        emit_economics(cfg, grid, &data, &prices, &records, out)
    })?;
    timed(&mut t, "sysload", || {
        emit_sysload(cfg, grid, &data, &model, &records, out)
    })?;

    out.manifest.counts = counts(&data, rows, Some(&model));
    out.manifest.timings_ms = t;
    Ok(())
}

fn emit_zones(
    cfg: &RunConfig,
    grid: &ThetaGrid,
    data: &Dataset,
    model: &ClusterModel,
    records: &[DisguiseRecord],
    out: &mut Emitter,
) -> Result<()> {
    let rows = zones::sweep(records, data, model, grid, cfg.empty_zone)?;
    out.emit(report::ZONES, |p| report::write_zones(p, &rows))
}

fn emit_economics(
    cfg: &RunConfig,
    grid: &ThetaGrid,
    data: &Dataset,
    prices: &ClusterPrices,
    records: &[DisguiseRecord],
    out: &mut Emitter,
) -> Result<()> {
    let benefits = economics::bill_benefits(records, data, prices, cfg.benefit_basis)?;
    out.emit(report::BENEFITS, |p| report::write_benefits(p, &benefits))?;
    let curve = economics::benefit_curves(records, data, prices, grid, cfg.benefit_basis)?;
    out.emit(report::BENEFIT_CURVE, |p| {
        report::write_benefit_curve(p, &curve)
    })?;
    if let Some(params) = &cfg.utility {
        let rows = utility_rows(records, data, prices, params)?;
        out.emit(report::UTILITY, |p| report::write_utility(p, &rows))?;
    }
    Ok(())
}

fn emit_sysload(
    cfg: &RunConfig,
    grid: &ThetaGrid,
    data: &Dataset,
    model: &ClusterModel,
    records: &[DisguiseRecord],
    out: &mut Emitter,
) -> Result<()> {
    let rows = sysload::peak_sweep(data, records, model, grid, cfg.disguise_extent)?;
    out.emit(report::SYSLOAD, |p| report::write_sysload(p, &rows))
}

/// A single pipeline stage for partial re-runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Cluster,
    Price,
    Disguise,
    Zones,
    Economics,
    Sysload,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Cluster => "clustering",
            Stage::Price => "pricing",
            Stage::Disguise => "disguise",
            Stage::Zones => "zones",
            Stage::Economics => "economics",
            Stage::Sysload => "sysload",
        }
    }
}

/// Runs one stage, reading earlier stages' files from `cfg.output_dir` and
/// checking them against the manifest there.
pub fn run_stage(cfg: &RunConfig, stage: Stage) -> Result<Manifest> {
    let dir = &cfg.output_dir;
    let manifest_path = dir.join(report::MANIFEST);
    let manifest = if manifest_path.is_file() {
        Manifest::load(&manifest_path).map_err(|e| e.in_stage(stage.name()))?
    } else {
        Manifest::default()
    };
    let mut out = Emitter::new(dir, manifest)?;
    out.manifest.config = Some(cfg.clone());
    let start = Instant::now();
    match stage_body(cfg, stage, &mut out) {
        Ok(()) => {
            out.manifest.timings_ms.insert(
                stage.name().to_string(),
                start.elapsed().as_secs_f64() * 1e3,
            );
            out.finish().map_err(|e| e.in_stage("report"))
        }
        Err(e) => {
            out.discard();
            Err(e.in_stage(stage.name()))
        }
    }
}

fn stage_body(cfg: &RunConfig, stage: Stage, out: &mut Emitter) -> Result<()> {
    let needs_grid = matches!(
        stage,
        Stage::Disguise | Stage::Zones | Stage::Economics | Stage::Sysload
    );
    let grid = if needs_grid {
        Some(cfg.theta_grid.build()?)
    } else {
        None
    };
    if stage == Stage::Price {
        cfg.check_prices()?;
    }
    // Report the stage's direct input first when several are missing.
    let cr_path = match stage {
        Stage::Zones | Stage::Economics | Stage::Sysload => Some(out.verified(report::CR)?),
        _ => None,
    };
    let (data, rows) = ingest(cfg).map_err(|e| e.in_stage("ingest"))?;

    if stage == Stage::Cluster {
        out.emit(report::REJECTED, |p| {
            profiles::write_rejected_csv(p, &data.rejected).map(|_| data.rejected.len())
        })?;
        let model = cluster_step(cfg, &data)?;
        out.emit(report::CENTERS, |p| report::write_centers(p, &model))?;
        out.emit(report::ASSIGNMENTS, |p| {
            report::write_assignments(p, &data, &model)
        })?;
        out.manifest.counts = counts(&data, rows, Some(&model));
        return Ok(());
    }

    let centers = report::read_centers(&out.verified(report::CENTERS)?, cfg.hours)?;
    let assignment = report::read_assignments(&out.verified(report::ASSIGNMENTS)?, &data)?;
    let model = ClusterModel::from_parts(centers, assignment, &data)?;

    if stage == Stage::Price {
        let prices = price_step(&model, &cfg.price_curve()?)?;
        return out.emit(report::CLUSTER_PRICES, |p| {
            report::write_cluster_prices(p, &prices)
        });
    }

    let prices = report::read_cluster_prices(&out.verified(report::CLUSTER_PRICES)?)?;
    if prices.len() != model.k() {
        return Err(Error::Incompatible {
            file: report::CLUSTER_PRICES.into(),
            reason: format!("{} prices for {} clusters", prices.len(), model.k()),
        });
    }
    let grid = grid.expect("grid built for this stage");

    if stage == Stage::Disguise {
        let records = disguise_step(cfg, &data, &model, &prices)?;
        out.emit(report::CR, |p| report::write_cr(p, &records))?;
        return out.emit(report::TRAJECTORIES, |p| {
            report::write_trajectories(p, &records, &grid)
        });
    }

    let rows = report::read_cr(&cr_path.expect("verified above"))?;
    let records = records_from_rows(rows, &data, &model)?;
    match stage {
        Stage::Zones => emit_zones(cfg, &grid, &data, &model, &records, out),
        Stage::Economics => emit_economics(cfg, &grid, &data, &prices, &records, out),
        Stage::Sysload => emit_sysload(cfg, &grid, &data, &model, &records, out),
        _ => unreachable!("handled above"),
    }
}

/// What `validate` found; nothing is written.
#[derive(Debug, Clone, PartialEq)]
pub struct Validation {
    pub input_rows: usize,
    pub profiles: usize,
    pub rejected: usize,
    pub grid_points: usize,
    pub price_hours: usize,
}

/// Schema-checks the inputs named by `cfg` without writing anything.
pub fn validate(cfg: &RunConfig) -> Result<Validation> {
    let grid = cfg.validate()?;
    let (data, rows) = ingest(cfg).map_err(|e| e.in_stage("ingest"))?;
    let curve = cfg.price_curve().map_err(|e| e.in_stage("pricing"))?;
    Ok(Validation {
        input_rows: rows,
        profiles: data.len(),
        rejected: data.rejected.len(),
        grid_points: grid.len(),
        price_hours: curve.hours(),
    })
}

/// Options for generating a demo dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthOptions {
    pub profiles_path: PathBuf,
    pub prices_path: Option<PathBuf>,
    pub profiles: usize,
    pub archetypes: usize,
    pub sigma: f64,
    pub seed: u64,
    pub hours: usize,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            profiles_path: PathBuf::from("profiles.csv"),
            prices_path: Some(PathBuf::from("prices.csv")),
            profiles: 3155,
            archetypes: 30,
            sigma: 0.15,
            seed: 0,
            hours: profiles::DEFAULT_HOURS,
        }
    }
}

/// Writes a synthetic `profiles.csv` and, optionally, the synthetic price curve.
pub fn synth(opts: &SynthOptions) -> Result<usize> {
    let spec = profiles::demo_mixture(
        opts.hours,
        opts.archetypes,
        opts.profiles,
        opts.sigma,
        opts.seed,
    );
    let set = profiles::synthesize(&spec)?;
    for path in std::iter::once(&opts.profiles_path).chain(opts.prices_path.as_ref()) {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    profiles::write_profiles_csv(&opts.profiles_path, &set.raw)?;
    if let Some(path) = &opts.prices_path {
        pricing::write_price_curve(path, &PriceCurve::synthetic_two_peak(opts.hours))?;
    }
    Ok(set.raw.len())
}
