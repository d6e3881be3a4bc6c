use std::fs;
use std::path::{Path, PathBuf};

use disguise_core::pipeline::{self, GridSpec, Manifest, RunConfig, Stage, SynthOptions};
use disguise_core::report;
use disguise_core::Error;

fn synth_inputs(dir: &Path, profiles: usize, archetypes: usize) -> (PathBuf, PathBuf) {
    let profiles_path = dir.join("profiles.csv");
    let prices_path = dir.join("prices.csv");
    pipeline::synth(&SynthOptions {
        profiles_path: profiles_path.clone(),
        prices_path: Some(prices_path.clone()),
        profiles,
        archetypes,
        seed: 5,
        ..SynthOptions::default()
    })
    .unwrap();
    (profiles_path, prices_path)
}

fn config(dir: &Path, out: &str) -> RunConfig {
    RunConfig {
        profiles_path: Some(dir.join("profiles.csv")),
        prices_path: Some(dir.join("prices.csv")),
        k: 6,
        seed: 3,
        theta_grid: GridSpec {
            start: 0.0,
            stop: 0.5,
            step: 0.05,
        },
        output_dir: dir.join(out),
        ..RunConfig::default()
    }
}

const STAGES: [Stage; 6] = [
    Stage::Cluster,
    Stage::Price,
    Stage::Disguise,
    Stage::Zones,
    Stage::Economics,
    Stage::Sysload,
];

#[test]
fn staged_run_matches_monolithic_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    synth_inputs(dir.path(), 300, 6);
    let whole = pipeline::run(&config(dir.path(), "whole")).unwrap();
    let staged_cfg = config(dir.path(), "staged");
    for stage in STAGES {
        pipeline::run_stage(&staged_cfg, stage).unwrap();
    }
    let staged = Manifest::load(&staged_cfg.output_dir.join(report::MANIFEST)).unwrap();
    assert_eq!(whole.files, staged.files);
    for name in report::REPORT_FILES {
        let a = fs::read(dir.path().join("whole").join(name)).unwrap();
        let b = fs::read(dir.path().join("staged").join(name)).unwrap();
        assert!(a == b, "{name} differs");
    }
}

#[test]
fn reruns_produce_identical_manifests() {
    let dir = tempfile::tempdir().unwrap();
    synth_inputs(dir.path(), 200, 5);
    let mut a = pipeline::run(&config(dir.path(), "a")).unwrap();
    let mut b = pipeline::run(&config(dir.path(), "b")).unwrap();
    // wall-clock timings are the only run-dependent field
    a.timings_ms.clear();
    b.timings_ms.clear();
    a.config.as_mut().unwrap().output_dir = PathBuf::new();
    b.config.as_mut().unwrap().output_dir = PathBuf::new();
    assert_eq!(a, b);
}

#[test]
fn row_counts_follow_the_config() {
    let dir = tempfile::tempdir().unwrap();
    synth_inputs(dir.path(), 240, 6);
    let cfg = config(dir.path(), "out");
    let m = pipeline::run(&cfg).unwrap();
    let grid = 11;
    assert_eq!(m.counts.profiles, 240);
    assert_eq!(m.files[report::CENTERS].rows, 6);
    assert_eq!(m.files[report::ASSIGNMENTS].rows, 240);
    assert_eq!(m.files[report::CR].rows, 240);
    assert_eq!(m.files[report::ZONES].rows, grid * 7);
    assert_eq!(m.files[report::BENEFIT_CURVE].rows, grid);
    assert_eq!(m.files[report::SYSLOAD].rows, grid);
    assert!(!m.files.contains_key(report::UTILITY));
    for name in report::REPORT_FILES {
        assert!(cfg.output_dir.join(name).is_file(), "{name} missing");
    }
}

#[test]
fn downstream_stage_without_cr_reports_it() {
    let dir = tempfile::tempdir().unwrap();
    synth_inputs(dir.path(), 100, 4);
    let cfg = config(dir.path(), "out");
    for stage in [Stage::Zones, Stage::Economics, Stage::Sysload] {
        let err = pipeline::run_stage(&cfg, stage).unwrap_err();
        assert_eq!(err.stage(), Some(stage.name()));
        assert!(err.to_string().contains("missing cr.csv"), "{err}");
        assert!(err.is_input_error());
    }
}

#[test]
fn tampered_intermediate_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    synth_inputs(dir.path(), 100, 4);
    let cfg = config(dir.path(), "out");
    pipeline::run_stage(&cfg, Stage::Cluster).unwrap();
    let centers = cfg.output_dir.join(report::CENTERS);
    let mut text = fs::read_to_string(&centers).unwrap();
    text.push('\n');
    fs::write(&centers, text).unwrap();
    let err = pipeline::run_stage(&cfg, Stage::Price).unwrap_err();
    assert!(
        matches!(err, Error::Stage { ref source, .. } if matches!(**source, Error::ChecksumMismatch { .. })),
        "{err}"
    );
    assert!(!cfg.output_dir.join(report::CLUSTER_PRICES).exists());
}

#[test]
fn missing_prices_is_a_pricing_error() {
    let dir = tempfile::tempdir().unwrap();
    synth_inputs(dir.path(), 100, 4);
    let mut cfg = config(dir.path(), "out");
    cfg.prices_path = Some(dir.path().join("nope.csv"));
    let err = pipeline::run(&cfg).unwrap_err();
    assert_eq!(err.stage(), Some("pricing"));
    assert!(err.is_input_error());
    assert!(!cfg.output_dir.join(report::CENTERS).exists());
}

#[test]
fn validate_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    synth_inputs(dir.path(), 120, 4);
    let cfg = config(dir.path(), "out");
    let v = pipeline::validate(&cfg).unwrap();
    assert_eq!((v.input_rows, v.profiles, v.rejected), (120, 120, 0));
    assert_eq!(v.grid_points, 11);
    assert!(!cfg.output_dir.exists());
}

#[test]
fn utility_report_is_opt_in() {
    let dir = tempfile::tempdir().unwrap();
    synth_inputs(dir.path(), 120, 4);
    let mut cfg = config(dir.path(), "out");
    cfg.utility = Some(disguise_core::UtilityParams::new(1.0, 0.0).unwrap());
    let m = pipeline::run(&cfg).unwrap();
    assert_eq!(m.files[report::UTILITY].rows, 120);
}

#[test]
fn toml_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    fs::write(
        &path,
        r#"
profiles_path = "data/profiles.csv"
synthetic_prices = true
k = 12
switch_rule = "strict"
center_update = "mean"
benefit_basis = "normalized"
disguise_extent = "full"
output_dir = "results"

[theta_grid]
start = 0.0
stop = 0.2
step = 0.01

[utility]
u_max = 3.0
c = 0.5
"#,
    )
    .unwrap();
    let cfg = RunConfig::from_toml_file(&path).unwrap();
    assert_eq!(cfg.k, 12);
    assert_eq!(cfg.switch_rule, disguise_core::SwitchRule::Strict);
    assert_eq!(cfg.theta_grid.build().unwrap().len(), 21);
    assert_eq!(cfg.utility.unwrap().c, 0.5);

    fs::write(&path, "k = 3\nbogus = 1\n").unwrap();
    assert!(matches!(
        RunConfig::from_toml_file(&path),
        Err(Error::Config(_))
    ));
}
