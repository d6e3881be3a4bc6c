//! CSV report schemas: writers for every emitted file and readers for the
//! intermediates that later stages consume. Floats go through
//! [`format_f64`](crate::numfmt::format_f64).

use std::collections::BTreeMap;
use std::fs::File;
use std::path::Path;

use crate::clustering::ClusterModel;
use crate::disguise::{trajectories, DisguiseRecord};
use crate::economics::{BenefitCurveRow, BenefitRecord};
use crate::error::{Error, Result};
use crate::numfmt::{format_f64, parse_f64};
use crate::pricing::ClusterPrices;
use crate::profiles::{hour_label, Dataset};
use crate::sysload::SystemLoadRow;
use crate::zones::{ThetaGrid, ZoneRow};

pub const REJECTED: &str = "rejected.csv";
pub const CENTERS: &str = "centers.csv";
pub const ASSIGNMENTS: &str = "assignments.csv";
pub const CLUSTER_PRICES: &str = "cluster_prices.csv";
pub const CR: &str = "cr.csv";
pub const TRAJECTORIES: &str = "trajectories.csv";
pub const ZONES: &str = "zones.csv";
pub const BENEFITS: &str = "benefits.csv";
pub const BENEFIT_CURVE: &str = "benefit_curve.csv";
pub const UTILITY: &str = "utility.csv";
pub const SYSLOAD: &str = "sysload.csv";
pub const MANIFEST: &str = "manifest.json";

/// The nine report files every full run emits.
pub const REPORT_FILES: [&str; 9] = [
    REJECTED,
    CENTERS,
    ASSIGNMENTS,
    CR,
    TRAJECTORIES,
    ZONES,
    BENEFITS,
    BENEFIT_CURVE,
    SYSLOAD,
];

struct Sheet {
    path: std::path::PathBuf,
    writer: csv::Writer<File>,
    rows: usize,
}

impl Sheet {
    fn create(path: &Path, header: &[String]) -> Result<Self> {
        let mut writer = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        writer
            .write_record(header)
            .map_err(|e| Error::csv(path, e))?;
        Ok(Sheet {
            path: path.to_path_buf(),
            writer,
            rows: 0,
        })
    }

    fn row(&mut self, fields: &[String]) -> Result<()> {
        self.rows += 1;
        self.writer
            .write_record(fields)
            .map_err(|e| Error::csv(&self.path, e))
    }

    fn finish(mut self) -> Result<usize> {
        self.writer.flush().map_err(|e| Error::io(&self.path, e))?;
        Ok(self.rows)
    }
}

fn header(fixed: &[&str], hours: usize, tail: &[&str]) -> Vec<String> {
    fixed
        .iter()
        .map(|s| s.to_string())
        .chain((0..hours).map(hour_label))
        .chain(tail.iter().map(|s| s.to_string()))
        .collect()
}

fn open(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingInput(path.file_name().map_or_else(
            || path.display().to_string(),
            |n| n.to_string_lossy().into_owned(),
        )),
        _ => Error::io(path, e),
    })?;
    Ok(csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn check_header(reader: &mut csv::Reader<File>, path: &Path, expected: &[String]) -> Result<()> {
    let found = reader.headers().map_err(|e| Error::csv(path, e))?;
    if found.len() != expected.len() || found.iter().zip(expected).any(|(a, b)| a != b) {
        return Err(Error::MalformedHeader {
            path: path.to_path_buf(),
            reason: format!("expected `{}`", expected.join(",")),
        });
    }
    Ok(())
}

fn incompatible(path: &Path, reason: impl Into<String>) -> Error {
    Error::Incompatible {
        file: path
            .file_name()
            .map_or_else(String::new, |n| n.to_string_lossy().into_owned()),
        reason: reason.into(),
    }
}

fn field<T: std::str::FromStr>(path: &Path, row: usize, s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| incompatible(path, format!("row {row}: cannot parse `{s}`")))
}

fn float(path: &Path, row: usize, s: &str) -> Result<f64> {
    parse_f64(s).ok_or_else(|| incompatible(path, format!("row {row}: cannot parse `{s}`")))
}

pub fn write_centers(path: &Path, model: &ClusterModel) -> Result<usize> {
    let mut sheet = Sheet::create(path, &header(&["cluster"], model.hours(), &["size"]))?;
    for (n, c) in model.centers.iter().enumerate() {
        let mut rec = vec![n.to_string()];
        rec.extend(c.iter().map(|&x| format_f64(x)));
        rec.push(model.sizes[n].to_string());
        sheet.row(&rec)?;
    }
    sheet.finish()
}

pub fn read_centers(path: &Path, hours: usize) -> Result<Vec<Vec<f64>>> {
    let mut reader = open(path)?;
    check_header(&mut reader, path, &header(&["cluster"], hours, &["size"]))?;
    let mut centers = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let n: usize = field(path, i + 1, &rec[0])?;
        if n != i {
            return Err(incompatible(
                path,
                format!("row {}: cluster {n} out of order", i + 1),
            ));
        }
        let c = (1..=hours)
            .map(|j| float(path, i + 1, &rec[j]))
            .collect::<Result<Vec<_>>>()?;
        centers.push(c);
    }
    if centers.is_empty() {
        return Err(incompatible(path, "no clusters"));
    }
    Ok(centers)
}

pub fn write_assignments(path: &Path, data: &Dataset, model: &ClusterModel) -> Result<usize> {
    let mut sheet = Sheet::create(path, &["profile_id".into(), "cluster".into()])?;
    for (p, a) in data.profiles.iter().zip(&model.assignment) {
        sheet.row(&[p.profile_id.clone(), a.to_string()])?;
    }
    sheet.finish()
}

/// Reads assignments and checks they line up with `data` profile by profile.
pub fn read_assignments(path: &Path, data: &Dataset) -> Result<Vec<usize>> {
    let mut reader = open(path)?;
    check_header(&mut reader, path, &["profile_id".into(), "cluster".into()])?;
    let mut out = Vec::with_capacity(data.len());
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        match data.profiles.get(i) {
            Some(p) if p.profile_id == rec[0] => {}
            _ => {
                return Err(incompatible(
                    path,
                    format!(
                        "row {}: profile `{}` does not match the dataset",
                        i + 1,
                        &rec[0]
                    ),
                ))
            }
        }
        out.push(field(path, i + 1, &rec[1])?);
    }
    if out.len() != data.len() {
        return Err(incompatible(
            path,
            format!("{} assignments for {} profiles", out.len(), data.len()),
        ));
    }
    Ok(out)
}

pub fn write_cluster_prices(path: &Path, prices: &ClusterPrices) -> Result<usize> {
    let mut sheet = Sheet::create(path, &["cluster".into(), "price".into()])?;
    for (n, p) in prices.price.iter().enumerate() {
        sheet.row(&[n.to_string(), format_f64(*p)])?;
    }
    sheet.finish()
}

pub fn read_cluster_prices(path: &Path) -> Result<ClusterPrices> {
    let mut reader = open(path)?;
    check_header(&mut reader, path, &["cluster".into(), "price".into()])?;
    let mut price = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let n: usize = field(path, i + 1, &rec[0])?;
        if n != i {
            return Err(incompatible(
                path,
                format!("row {}: cluster {n} out of order", i + 1),
            ));
        }
        price.push(float(path, i + 1, &rec[1])?);
    }
    Ok(ClusterPrices { price })
}

pub fn write_cr(path: &Path, records: &[DisguiseRecord]) -> Result<usize> {
    let head: Vec<String> = ["profile_id", "home_cluster", "cr", "target_cluster"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let mut sheet = Sheet::create(path, &head)?;
    for r in records {
        sheet.row(&[
            r.profile_id.clone(),
            r.home_cluster.to_string(),
            format_f64(r.cr),
            r.target.map_or_else(String::new, |t| t.to_string()),
        ])?;
    }
    sheet.finish()
}

/// A row of `cr.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct CrRow {
    pub profile_id: String,
    pub home_cluster: usize,
    pub cr: f64,
    pub target: Option<usize>,
}

pub fn read_cr(path: &Path) -> Result<Vec<CrRow>> {
    let mut reader = open(path)?;
    let head: Vec<String> = ["profile_id", "home_cluster", "cr", "target_cluster"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    check_header(&mut reader, path, &head)?;
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let row = i + 1;
        let target = if rec[3].is_empty() {
            None
        } else {
            Some(field(path, row, &rec[3])?)
        };
        out.push(CrRow {
            profile_id: rec[0].to_string(),
            home_cluster: field(path, row, &rec[1])?,
            cr: float(path, row, &rec[2])?,
            target,
        });
    }
    Ok(out)
}

pub fn write_trajectories(
    path: &Path,
    records: &[DisguiseRecord],
    grid: &ThetaGrid,
) -> Result<usize> {
    let head: Vec<String> = ["theta", "from", "to", "count"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let mut sheet = Sheet::create(path, &head)?;
    for &theta in grid.points() {
        let moves: BTreeMap<(usize, usize), usize> = trajectories(records, theta)?;
        for ((from, to), count) in moves {
            sheet.row(&[
                format_f64(theta),
                from.to_string(),
                to.to_string(),
                count.to_string(),
            ])?;
        }
    }
    sheet.finish()
}

pub fn write_zones(path: &Path, rows: &[ZoneRow]) -> Result<usize> {
    let head: Vec<String> = ["theta", "cluster", "n_sensitive", "pct_sensitive", "radius"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let mut sheet = Sheet::create(path, &head)?;
    for r in rows {
        sheet.row(&[
            format_f64(r.theta),
            r.cluster
                .map_or_else(|| "-1".to_string(), |c| c.to_string()),
            r.n_sensitive.to_string(),
            format_f64(r.pct_sensitive),
            format_f64(r.radius.unwrap_or(f64::NAN)),
        ])?;
    }
    sheet.finish()
}

pub fn write_benefits(path: &Path, rows: &[BenefitRecord]) -> Result<usize> {
    let head: Vec<String> = ["profile_id", "benefit", "basis"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let mut sheet = Sheet::create(path, &head)?;
    for r in rows {
        sheet.row(&[
            r.profile_id.clone(),
            format_f64(r.benefit),
            r.basis.as_str().to_string(),
        ])?;
    }
    sheet.finish()
}

pub fn write_utility(path: &Path, rows: &[(String, Option<f64>)]) -> Result<usize> {
    let mut sheet = Sheet::create(path, &["profile_id".into(), "utility_gain".into()])?;
    for (id, gain) in rows {
        sheet.row(&[id.clone(), gain.map_or_else(String::new, format_f64)])?;
    }
    sheet.finish()
}

pub fn write_benefit_curve(path: &Path, rows: &[BenefitCurveRow]) -> Result<usize> {
    let head: Vec<String> = ["theta", "avg_cumulative", "avg_marginal", "n_strategic"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let mut sheet = Sheet::create(path, &head)?;
    for r in rows {
        sheet.row(&[
            format_f64(r.theta),
            format_f64(r.avg_cumulative),
            format_f64(r.avg_marginal),
            r.n_strategic.to_string(),
        ])?;
    }
    sheet.finish()
}

pub fn write_sysload(path: &Path, rows: &[SystemLoadRow]) -> Result<usize> {
    let hours = rows.first().map_or(0, |r| r.hourly_load.len());
    let mut sheet = Sheet::create(
        path,
        &header(&["theta"], hours, &["peak", "peak_hour", "peak_ratio"]),
    )?;
    for r in rows {
        let mut rec = vec![format_f64(r.theta)];
        rec.extend(r.hourly_load.iter().map(|&x| format_f64(x)));
        rec.push(format_f64(r.peak));
        rec.push(r.peak_hour.to_string());
        rec.push(format_f64(r.peak_ratio));
        sheet.row(&rec)?;
    }
    sheet.finish()
}
