use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use disguise_core::economics::UtilityParams;
use disguise_core::pipeline::{self, GridSpec, SynthOptions};
use disguise_core::{
    BenefitBasis, CenterUpdate, DisguiseExtent, EmptyZone, Error, RunConfig, Stage, SwitchRule,
};

/// Cluster-oriented electricity pricing simulator: cluster load profiles,
/// price clusters, and measure how cheaply consumers can disguise themselves
/// into cheaper clusters.
#[derive(Debug, Parser)]
#[command(name = "disguise", version)]
struct Cli {
    /// Worker threads (default: machine parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic demo dataset (profiles.csv and prices.csv).
    Synth(SynthArgs),
    /// Ingest profiles and fit the clustering (centers.csv, assignments.csv, rejected.csv).
    Cluster(PipelineArgs),
    /// Price each cluster at the MCI of its center (cluster_prices.csv).
    Price(PipelineArgs),
    /// Minimal disguise effort per profile (cr.csv, trajectories.csv).
    Disguise(PipelineArgs),
    /// Sensitive-zone sweep over θ (zones.csv).
    Zones(PipelineArgs),
    /// Benefits and benefit curves (benefits.csv, benefit_curve.csv).
    Economics(PipelineArgs),
    /// System load under mass disguising (sysload.csv).
    Sysload(PipelineArgs),
    /// The full pipeline.
    Run(PipelineArgs),
    /// Schema-check the inputs without writing anything.
    Validate(PipelineArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Directory for profiles.csv and prices.csv.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Number of profiles.
    #[arg(long, default_value_t = 3155)]
    count: usize,
    /// Number of day-shape archetypes.
    #[arg(long, default_value_t = 30)]
    archetypes: usize,
    /// Additive noise standard deviation (kWh).
    #[arg(long, default_value_t = 0.15)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 24)]
    hours: usize,
    /// Skip writing prices.csv.
    #[arg(long)]
    no_prices: bool,
}

#[derive(Debug, Args)]
struct PipelineArgs {
    /// TOML configuration file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input profiles CSV (`user_id,date,h00..`).
    #[arg(long)]
    profiles: Option<PathBuf>,
    /// Hourly price curve CSV (`hour,price`).
    #[arg(long)]
    prices: Option<PathBuf>,
    /// Use the built-in synthetic two-peak price curve.
    #[arg(long)]
    synthetic_prices: bool,
    /// Output directory (default `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of clusters (default 30).
    #[arg(long)]
    k: Option<usize>,
    /// Seed for center initialization.
    #[arg(long)]
    seed: Option<u64>,
    /// Samples per profile (default 24).
    #[arg(long)]
    hours: Option<usize>,
    /// θ grid: first point (default 0).
    #[arg(long)]
    theta_start: Option<f64>,
    /// θ grid: last point (default 0.5).
    #[arg(long)]
    theta_stop: Option<f64>,
    /// θ grid: spacing (default 0.005).
    #[arg(long)]
    theta_step: Option<f64>,
    /// median | mean
    #[arg(long)]
    center_update: Option<CenterUpdate>,
    /// paper | strict
    #[arg(long)]
    switch_rule: Option<SwitchRule>,
    /// actual | normalized
    #[arg(long)]
    benefit_basis: Option<BenefitBasis>,
    /// cr | full
    #[arg(long)]
    disguise_extent: Option<DisguiseExtent>,
    /// Report the full cluster radius (`full`) or nothing (`sentinel`) when no
    /// member can disguise.
    #[arg(long)]
    empty_zone: Option<EmptyZone>,
    /// Satiation constant of the utility model; enables utility.csv.
    #[arg(long, requires = "discomfort")]
    u_max: Option<f64>,
    /// Discomfort per unit l1 deviation; enables utility.csv.
    #[arg(long, requires = "u_max")]
    discomfort: Option<f64>,
}

impl PipelineArgs {
    fn into_config(self) -> Result<RunConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_toml_file(path)?,
            None => RunConfig::default(),
        };
        if let Some(p) = self.profiles {
            cfg.profiles_path = Some(p);
        }
        if let Some(p) = self.prices {
            cfg.prices_path = Some(p);
            cfg.synthetic_prices = false;
        }
        if self.synthetic_prices {
            cfg.synthetic_prices = true;
        }
        if let Some(out) = self.out {
            cfg.output_dir = out;
        }
        macro_rules! set {
            ($($field:ident => $target:expr),*) => {
                $(if let Some(v) = self.$field { $target = v; })*
            };
        }
        set!(
            k => cfg.k,
            seed => cfg.seed,
            hours => cfg.hours,
            center_update => cfg.center_update,
            switch_rule => cfg.switch_rule,
            benefit_basis => cfg.benefit_basis,
            disguise_extent => cfg.disguise_extent,
            empty_zone => cfg.empty_zone
        );
        let GridSpec { start, stop, step } = cfg.theta_grid;
        cfg.theta_grid = GridSpec {
            start: self.theta_start.unwrap_or(start),
            stop: self.theta_stop.unwrap_or(stop),
            step: self.theta_step.unwrap_or(step),
        };
        if let (Some(u_max), Some(c)) = (self.u_max, self.discomfort) {
            cfg.utility = Some(UtilityParams::new(u_max, c)?);
        }
        Ok(cfg)
    }
}

fn execute(command: Command) -> Result<(), Error> {
    let (stage, args) = match command {
        Command::Synth(a) => {
            let n = pipeline::synth(&SynthOptions {
                profiles_path: a.out.join("profiles.csv"),
                prices_path: (!a.no_prices).then(|| a.out.join("prices.csv")),
                profiles: a.count,
                archetypes: a.archetypes,
                sigma: a.sigma,
                seed: a.seed,
                hours: a.hours,
            })?;
            println!(
                "wrote {n} profiles to {}",
                a.out.join("profiles.csv").display()
            );
            return Ok(());
        }
        Command::Run(a) => {
            let manifest = pipeline::run(&a.into_config()?)?;
            print_files(&manifest);
            return Ok(());
        }
        Command::Validate(a) => {
            let v = pipeline::validate(&a.into_config()?)?;
            println!(
                "ok: {} rows, {} valid profiles, {} rejected, {} price hours, {} grid points",
                v.input_rows, v.profiles, v.rejected, v.price_hours, v.grid_points
            );
            return Ok(());
        }
        Command::Cluster(a) => (Stage::Cluster, a),
        Command::Price(a) => (Stage::Price, a),
        Command::Disguise(a) => (Stage::Disguise, a),
        Command::Zones(a) => (Stage::Zones, a),
        Command::Economics(a) => (Stage::Economics, a),
        Command::Sysload(a) => (Stage::Sysload, a),
    };
    let manifest = pipeline::run_stage(&args.into_config()?, stage)?;
    print_files(&manifest);
    Ok(())
}

fn print_files(manifest: &disguise_core::Manifest) {
    for (name, entry) in &manifest.files {
        println!("{name}\t{} rows\t{}", entry.rows, entry.sha256);
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(1);
        }
    }
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 1 } else { 2 })
        }
    }
}
