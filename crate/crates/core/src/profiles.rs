//! Daily hourly load profiles: ingestion, validation, l1 normalization and
//! synthetic generation.
//!
//! Every user-day is an independent profile; the user identifier is carried as
//! metadata only. Invalid rows are never dropped silently, they land in
//! [`Dataset::rejected`] with a reason.

use std::collections::HashSet;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use chrono::{Days, NaiveDate};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numfmt::format_f64;

/// Default number of hourly slots per profile.
pub const DEFAULT_HOURS: usize = 24;

/// Tolerance on the unit sum of normalized weights.
pub const UNIT_SUM_TOL: f64 = 1e-9;

/// Column label for hour `t`: `h00`, `h01`, ...
pub fn hour_label(t: usize) -> String {
    format!("h{t:02}")
}

/// A consumer-day's raw hourly energy (kWh per hour).
#[derive(Debug, Clone, PartialEq)]
pub struct LoadProfile {
    pub profile_id: String,
    pub user_id: String,
    pub date: NaiveDate,
    pub energy: Vec<f64>,
}

impl LoadProfile {
    /// Builds a profile, checking that every entry is finite and non-negative
    /// and that the day is not all zeros.
    pub fn new(user_id: impl Into<String>, date: NaiveDate, energy: Vec<f64>) -> Result<Self> {
        if let Some(reason) = energy_violation(&energy) {
            return Err(Error::InvalidProfile(reason.to_string()));
        }
        let user_id = user_id.into();
        Ok(LoadProfile {
            profile_id: profile_id(&user_id, date),
            user_id,
            date,
            energy,
        })
    }

    pub fn hours(&self) -> usize {
        self.energy.len()
    }
}

/// Identifier of the profile recorded by `user_id` on `date`.
pub fn profile_id(user_id: &str, date: NaiveDate) -> String {
    format!("{user_id}@{}", date.format("%Y-%m-%d"))
}

/// An l1-normalized profile; the object all pricing and clustering works on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedProfile {
    pub profile_id: String,
    pub weights: Vec<f64>,
    /// The original daily energy in kWh.
    pub total_energy: f64,
}

impl NormalizedProfile {
    pub fn hours(&self) -> usize {
        self.weights.len()
    }

    /// Reconstructs raw hourly energy as `total_energy * weights`.
    pub fn energy(&self) -> Vec<f64> {
        self.weights.iter().map(|w| w * self.total_energy).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    /// 1-based data row number (the header is not counted).
    pub row: usize,
    pub reason: String,
}

/// Profiles in ingestion order plus the rows that failed validation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub profiles: Vec<NormalizedProfile>,
    pub rejected: Vec<Rejection>,
}

impl Dataset {
    pub fn from_profiles(profiles: Vec<NormalizedProfile>) -> Self {
        Dataset {
            profiles,
            rejected: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    /// Common dimension of the profiles, or `None` when empty.
    pub fn hours(&self) -> Option<usize> {
        self.profiles.first().map(|p| p.hours())
    }

    pub fn weights(&self) -> Vec<&[f64]> {
        self.profiles.iter().map(|p| p.weights.as_slice()).collect()
    }
}

fn energy_violation(energy: &[f64]) -> Option<&'static str> {
    if energy.iter().any(|e| !e.is_finite()) {
        return Some("non-finite energy");
    }
    if energy.iter().any(|&e| e < 0.0) {
        return Some("negative energy");
    }
    if energy.iter().sum::<f64>() <= 0.0 {
        return Some("zero total energy");
    }
    None
}

/// Normalizes an energy vector to unit l1 sum, returning `(weights, total)`.
pub fn normalize_energy(energy: &[f64]) -> Result<(Vec<f64>, f64)> {
    if let Some(reason) = energy_violation(energy) {
        return Err(match reason {
            "zero total energy" => Error::ZeroTotalEnergy,
            r => Error::InvalidProfile(r.to_string()),
        });
    }
    let total: f64 = energy.iter().sum();
    Ok((energy.iter().map(|e| e / total).collect(), total))
}

pub fn normalize(raw: &LoadProfile) -> Result<NormalizedProfile> {
    let (weights, total_energy) = normalize_energy(&raw.energy)?;
    Ok(NormalizedProfile {
        profile_id: raw.profile_id.clone(),
        weights,
        total_energy,
    })
}

/// Raw rows read from a profiles file before normalization.
#[derive(Debug, Clone, Default)]
pub struct RawIngest {
    pub profiles: Vec<LoadProfile>,
    pub rejected: Vec<Rejection>,
    /// Number of data rows seen, valid or not.
    pub rows: usize,
}

/// Reads and validates a `user_id,date,h00,...` file without normalizing.
pub fn read_profiles_csv(path: &Path, hours: usize) -> Result<RawIngest> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    let header = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
    let expected: Vec<String> = ["user_id".to_string(), "date".to_string()]
        .into_iter()
        .chain((0..hours).map(hour_label))
        .collect();
    if header.len() != expected.len() || header.iter().zip(&expected).any(|(a, b)| a != b) {
        return Err(Error::MalformedHeader {
            path: path.to_path_buf(),
            reason: format!(
                "expected `{}`, found `{}`",
                expected.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }

    let mut out = RawIngest::default();
    let mut seen = HashSet::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::csv(path, e))?;
        out.rows += 1;
        if record.len() != expected.len() {
            return Err(Error::RowShape {
                row,
                reason: format!(
                    "expected {} hourly values, found {}",
                    hours,
                    record.len().saturating_sub(2)
                ),
            });
        }
        match parse_row(&record, hours) {
            Ok(profile) => {
                if seen.insert(profile.profile_id.clone()) {
                    out.profiles.push(profile);
                } else {
                    out.rejected.push(Rejection {
                        row,
                        reason: "duplicate user-day".into(),
                    });
                }
            }
            Err(reason) => out.rejected.push(Rejection { row, reason }),
        }
    }
    Ok(out)
}

fn parse_row(record: &csv::StringRecord, hours: usize) -> std::result::Result<LoadProfile, String> {
    let user_id = record[0].to_string();
    if user_id.is_empty() {
        return Err("missing user_id".into());
    }
    let date = NaiveDate::parse_from_str(&record[1], "%Y-%m-%d")
        .map_err(|_| format!("invalid date `{}`", &record[1]))?;
    let mut energy = Vec::with_capacity(hours);
    for field in record.iter().skip(2) {
        if field.is_empty() {
            return Err("missing value".into());
        }
        let v: f64 = field
            .parse()
            .map_err(|_| format!("malformed value `{field}`"))?;
        energy.push(v);
    }
    LoadProfile::new(user_id, date, energy).map_err(|e| match e {
        Error::InvalidProfile(r) => r,
        other => other.to_string(),
    })
}

/// Reads a profiles file and normalizes every valid row.
pub fn ingest_csv(path: &Path, hours: usize) -> Result<Dataset> {
    let raw = read_profiles_csv(path, hours)?;
    let profiles = raw
        .profiles
        .iter()
        .map(normalize)
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        profiles,
        rejected: raw.rejected,
    })
}

pub fn write_profiles_csv(path: &Path, profiles: &[LoadProfile]) -> Result<()> {
    let hours = profiles.first().map_or(DEFAULT_HOURS, |p| p.hours());
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut header = vec!["user_id".to_string(), "date".to_string()];
    header.extend((0..hours).map(hour_label));
    w.write_record(&header).map_err(|e| Error::csv(path, e))?;
    for p in profiles {
        let mut rec = vec![p.user_id.clone(), p.date.format("%Y-%m-%d").to_string()];
        rec.extend(p.energy.iter().map(|&e| format_f64(e)));
        w.write_record(&rec).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_rejected_csv(path: &Path, rejected: &[Rejection]) -> Result<()> {
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut body = String::from("row_number,reason\n");
    for r in rejected {
        body.push_str(&format!("{},{}\n", r.row, csv_escape(&r.reason)));
    }
    f.write_all(body.as_bytes()).map_err(|e| Error::io(path, e))
}

fn csv_escape(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Mixture description for synthetic data: each prototype is a raw hourly
/// energy vector, repeated `counts[j]` times with additive Gaussian noise of
/// standard deviation `sigma`, truncated at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub prototypes: Vec<Vec<f64>>,
    pub counts: Vec<usize>,
    pub sigma: f64,
    pub seed: u64,
}

/// Synthetic profiles together with the index of the prototype that generated
/// each one.
#[derive(Debug, Clone)]
pub struct SyntheticSet {
    pub raw: Vec<LoadProfile>,
    pub labels: Vec<usize>,
    pub dataset: Dataset,
}

const SYNTH_START: (i32, u32, u32) = (2015, 5, 1);
const DAYS_PER_USER: usize = 100;

pub fn synthesize(spec: &MixtureSpec) -> Result<SyntheticSet> {
    if spec.prototypes.is_empty() {
        return Err(Error::EmptyPrototypes);
    }
    if spec.counts.len() != spec.prototypes.len() {
        return Err(Error::InvalidProfile(format!(
            "{} counts for {} prototypes",
            spec.counts.len(),
            spec.prototypes.len()
        )));
    }
    if !(spec.sigma >= 0.0 && spec.sigma.is_finite()) {
        return Err(Error::InvalidProfile(format!("noise level {}", spec.sigma)));
    }
    let hours = spec.prototypes[0].len();
    for p in &spec.prototypes {
        if p.len() != hours {
            return Err(Error::DimensionMismatch {
                expected: hours,
                got: p.len(),
            });
        }
        if let Some(reason) = energy_violation(p) {
            return Err(Error::InvalidProfile(format!("prototype: {reason}")));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.sigma.max(f64::MIN_POSITIVE)).expect("valid sigma");
    let start = NaiveDate::from_ymd_opt(SYNTH_START.0, SYNTH_START.1, SYNTH_START.2).unwrap();

    let mut raw = Vec::new();
    let mut labels = Vec::new();
    for (j, (proto, &count)) in spec.prototypes.iter().zip(&spec.counts).enumerate() {
        for _ in 0..count {
            let idx = raw.len();
            let energy = draw_noisy(proto, spec.sigma, &noise, &mut rng);
            let user = format!("u{:04}", idx / DAYS_PER_USER);
            let date = start + Days::new((idx % DAYS_PER_USER) as u64);
            raw.push(LoadProfile::new(user, date, energy)?);
            labels.push(j);
        }
    }
    let profiles = raw.iter().map(normalize).collect::<Result<Vec<_>>>()?;
    Ok(SyntheticSet {
        raw,
        labels,
        dataset: Dataset::from_profiles(profiles),
    })
}

fn draw_noisy(proto: &[f64], sigma: f64, noise: &Normal<f64>, rng: &mut ChaCha8Rng) -> Vec<f64> {
    if sigma == 0.0 {
        return proto.to_vec();
    }
    // Redraw the (rare) all-zero outcome so every synthetic day is valid.
    loop {
        let v: Vec<f64> = proto
            .iter()
            .map(|&x| (x + noise.sample(rng)).max(0.0))
            .collect();
        if v.iter().sum::<f64>() > 0.0 {
            return v;
        }
    }
}

/// Day-shape archetypes for demos: a base load plus one to three Gaussian
/// bumps at random hours.
pub fn demo_prototypes(hours: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    (0..count)
        .map(|_| {
            let base = rng.random_range(0.1..0.4);
            let bumps = rng.random_range(1..=3);
            let mut v = vec![base; hours];
            for _ in 0..bumps {
                let center = rng.random_range(0.0..hours as f64);
                let width = rng.random_range(1.0..3.5);
                let height = rng.random_range(0.5..2.5);
                for (t, x) in v.iter_mut().enumerate() {
                    // circular distance so late-night bumps wrap
                    let d = (t as f64 - center).abs();
                    let d = d.min(hours as f64 - d);
                    *x += height * (-0.5 * (d / width).powi(2)).exp();
                }
            }
            v
        })
        .collect()
}

/// Splits `total` profiles over `prototypes.len()` groups as evenly as
/// possible and builds the mixture.
pub fn demo_mixture(
    hours: usize,
    archetypes: usize,
    total: usize,
    sigma: f64,
    seed: u64,
) -> MixtureSpec {
    let prototypes = demo_prototypes(hours, archetypes, seed);
    let m = prototypes.len().max(1);
    let counts = (0..m)
        .map(|j| total / m + usize::from(j < total % m))
        .collect();
    MixtureSpec {
        prototypes,
        counts,
        sigma,
        seed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn day() -> NaiveDate {
        NaiveDate::from_ymd_opt(2015, 6, 1).unwrap()
    }

    fn write(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    fn header(h: usize) -> String {
        let mut s = String::from("user_id,date");
        for t in 0..h {
            s.push(',');
            s.push_str(&hour_label(t));
        }
        s
    }

    fn row(user: &str, date: &str, vals: &[&str]) -> String {
        format!("{user},{date},{}", vals.join(","))
    }

    #[test]
    fn normalize_examples() {
        let p = LoadProfile::new("a", day(), vec![1.0, 1.0, 2.0]).unwrap();
        let n = normalize(&p).unwrap();
        assert_eq!(n.weights, vec![0.25, 0.25, 0.5]);
        assert_eq!(n.total_energy, 4.0);

        let p = LoadProfile::new("a", day(), vec![0.2, 0.8]).unwrap();
        let n = normalize(&p).unwrap();
        assert_eq!(n.weights, vec![0.2, 0.8]);
        assert_eq!(n.total_energy, 1.0);

        assert!(matches!(
            normalize_energy(&[0.0, 0.0, 0.0]),
            Err(Error::ZeroTotalEnergy)
        ));
        assert!(LoadProfile::new("a", day(), vec![0.0; 3]).is_err());
    }

    #[test]
    fn ingest_examples() {
        let mut body = header(24);
        body.push('\n');
        body.push_str(&row("u1", "2015-05-01", &["2.0"; 24]));
        body.push('\n');
        let mut second = vec!["3", "1"];
        second.extend(["0"; 22]);
        body.push_str(&row("u1", "2015-05-02", &second));
        body.push('\n');
        let mut third = vec!["-1"];
        third.extend(["1"; 23]);
        body.push_str(&row("u1", "2015-05-03", &third));
        body.push('\n');
        let f = write(&body);

        let ds = ingest_csv(f.path(), 24).unwrap();
        assert_eq!(ds.len(), 2);
        assert!(ds.profiles[0].weights.iter().all(|&w| w == 1.0 / 24.0));
        assert_eq!(ds.profiles[0].total_energy, 48.0);
        assert_eq!(ds.profiles[1].weights[..3], [0.75, 0.25, 0.0]);
        assert_eq!(ds.profiles[1].total_energy, 4.0);
        assert_eq!(
            ds.rejected,
            vec![Rejection {
                row: 3,
                reason: "negative energy".into()
            }]
        );
        assert_eq!(ds.profiles[0].profile_id, "u1@2015-05-01");
    }

    #[test]
    fn ingest_rejection_reasons() {
        let body = format!(
            "{}\n{}\n{}\n{}\n{}\n{}\n{}\n",
            header(3),
            row("a", "2015-05-01", &["1", "", "1"]),
            row("a", "2015-05-02", &["1", "NaN", "1"]),
            row("a", "2015-05-03", &["0", "0", "0"]),
            row("a", "2015-13-03", &["1", "1", "1"]),
            row("a", "2015-05-04", &["1", "x", "1"]),
            row("a", "2015-05-05", &["1", "1", "1"]),
        );
        let f = write(&body);
        let ds = ingest_csv(f.path(), 3).unwrap();
        let reasons: Vec<_> = ds.rejected.iter().map(|r| r.reason.as_str()).collect();
        assert_eq!(ds.len(), 1);
        assert_eq!(reasons[0], "missing value");
        assert_eq!(reasons[1], "non-finite energy");
        assert_eq!(reasons[2], "zero total energy");
        assert!(reasons[3].starts_with("invalid date"));
        assert!(reasons[4].starts_with("malformed value"));
        assert_eq!(ds.len() + ds.rejected.len(), 6);
    }

    #[test]
    fn duplicate_user_day_is_rejected() {
        let body = format!(
            "{}\n{}\n{}\n",
            header(2),
            row("a", "2015-05-01", &["1", "1"]),
            row("a", "2015-05-01", &["1", "2"]),
        );
        let f = write(&body);
        let ds = ingest_csv(f.path(), 2).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.rejected[0].reason, "duplicate user-day");
    }

    #[test]
    fn fatal_ingest_errors() {
        let f = write("user,date,h00\n");
        assert!(matches!(
            ingest_csv(f.path(), 1),
            Err(Error::MalformedHeader { .. })
        ));

        let f = write(&format!(
            "{}\n{}\n",
            header(3),
            row("a", "2015-05-01", &["1", "1"])
        ));
        match ingest_csv(f.path(), 3) {
            Err(Error::RowShape { row, .. }) => assert_eq!(row, 1),
            other => panic!("expected row error, got {other:?}"),
        }

        // header for H=24 but H=3 requested
        let f = write(&format!("{}\n", header(24)));
        assert!(ingest_csv(f.path(), 3).is_err());

        assert!(matches!(
            ingest_csv(Path::new("/nonexistent/profiles.csv"), 24),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn synthesize_zero_noise_copies_prototype() {
        let spec = MixtureSpec {
            prototypes: vec![vec![1.0, 2.0, 1.0]],
            counts: vec![5],
            sigma: 0.0,
            seed: 3,
        };
        let s = synthesize(&spec).unwrap();
        assert_eq!(s.dataset.len(), 5);
        for p in &s.dataset.profiles {
            assert_eq!(p.weights, vec![0.25, 0.5, 0.25]);
        }
        assert_eq!(s.labels, vec![0; 5]);
    }

    #[test]
    fn synthesize_is_deterministic() {
        let spec = demo_mixture(24, 4, 50, 0.2, 42);
        let a = synthesize(&spec).unwrap();
        let b = synthesize(&spec).unwrap();
        assert_eq!(a.raw, b.raw);
        assert_eq!(a.dataset, b.dataset);

        let dir = tempfile::tempdir().unwrap();
        let (pa, pb) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
        write_profiles_csv(&pa, &a.raw).unwrap();
        write_profiles_csv(&pb, &b.raw).unwrap();
        assert_eq!(std::fs::read(&pa).unwrap(), std::fs::read(&pb).unwrap());

        let c = synthesize(&MixtureSpec { seed: 43, ..spec }).unwrap();
        assert_ne!(a.raw, c.raw);
    }

    #[test]
    fn synthesize_errors() {
        let spec = MixtureSpec {
            prototypes: vec![],
            counts: vec![],
            sigma: 0.1,
            seed: 0,
        };
        assert!(matches!(synthesize(&spec), Err(Error::EmptyPrototypes)));
    }

    #[test]
    fn written_profiles_reingest() {
        let s = synthesize(&demo_mixture(24, 3, 30, 0.1, 7)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("profiles.csv");
        write_profiles_csv(&path, &s.raw).unwrap();
        let ds = ingest_csv(&path, 24).unwrap();
        assert_eq!(ds.len(), 30);
        assert!(ds.rejected.is_empty());
        for (a, b) in ds.profiles.iter().zip(&s.dataset.profiles) {
            assert_eq!(a.profile_id, b.profile_id);
            assert!((a.total_energy - b.total_energy).abs() < 1e-9 * b.total_energy);
        }
    }

    proptest! {
        #[test]
        fn normalized_weights_are_unit_sum(energy in prop::collection::vec(0.0f64..100.0, 1..40)) {
            prop_assume!(energy.iter().sum::<f64>() > 0.0);
            let (w, total) = normalize_energy(&energy).unwrap();
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= UNIT_SUM_TOL);
            prop_assert!(w.iter().all(|&x| x >= 0.0));
            prop_assert!(total > 0.0);
        }

        #[test]
        fn weights_are_scale_invariant(
            energy in prop::collection::vec(0.0f64..100.0, 1..40),
            exp in -20i32..20,
            alpha in 1e-3f64..1e3,
        ) {
            prop_assume!(energy.iter().sum::<f64>() > 0.0);
            let (w, _) = normalize_energy(&energy).unwrap();
            // power-of-two scaling is exact in binary floating point
            let two = 2f64.powi(exp);
            let scaled: Vec<f64> = energy.iter().map(|e| e * two).collect();
            prop_assert_eq!(&normalize_energy(&scaled).unwrap().0, &w);
            let scaled: Vec<f64> = energy.iter().map(|e| e * alpha).collect();
            for (a, b) in normalize_energy(&scaled).unwrap().0.iter().zip(&w) {
                prop_assert!((a - b).abs() <= 1e-14);
            }
        }
    }
}
