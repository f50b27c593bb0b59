//! `epicontrol`: ingest data, calibrate, simulate and optimise lockdown
//! schedules from the command line.
//!
//! Exit codes: 0 on success, 2 for invalid input, 3 for runtime failures.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};
use epicontrol::abc::{
    bootstrap_resample, pmc_abc, posterior_summary, AbcConfig, PosteriorEnsemble,
    PriorSpecification,
};
use epicontrol::control::{
    dynamic_update, historical_bands, plan_from_ensemble, write_band_series_csv, write_bands_csv,
    BandRow, BandSeries, ChannelBounds, ControlBounds, CostWeights, NmpcResult,
    OptimizationArtifact, OptimizationConfig, UpdateOutcome, DEFAULT_H_MAX,
};
use epicontrol::data::{
    england_census, england_contacts, load_census, load_contact_matrices, CountryPreset,
};
use epicontrol::dataset::{ingest, Dataset, IngestSources};
use epicontrol::mobility::AgeBandMapping;
use epicontrol::model::EpidemicParameters;
use epicontrol::monitor::{Monitor, Silent};
use epicontrol::{Error, Result};

const DATA_DIR_ENV: &str = "EPICONTROL_DATA_DIR";

#[derive(Parser)]
#[command(
    name = "epicontrol",
    version,
    about = "Epidemic calibration and lockdown optimisation"
)]
struct Cli {
    /// Suppress progress output on stderr.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Normalise raw mobility and health CSVs into a dataset directory.
    Ingest(IngestArgs),
    /// Fit the model to a dataset with PMC-ABC.
    Calibrate(CalibrateArgs),
    /// Historical trajectory bands (occupancy, deaths, R) as CSV.
    Simulate(SimulateArgs),
    /// Historical R(t) band as CSV.
    RTrajectory(SimulateArgs),
    /// Optimise the whole horizon once and apply it open loop.
    Optimize(OptimizeArgs),
    /// Receding-horizon control.
    Nmpc(OptimizeArgs),
    /// Recalibrate on extended data and re-plan from the new horizon.
    Update(UpdateArgs),
}

#[derive(Args)]
struct DatasetArgs {
    /// Dataset directory; defaults to $EPICONTROL_DATA_DIR/<region>.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, default_value = "england")]
    region: String,
}

impl DatasetArgs {
    fn load(&self) -> Result<Dataset> {
        let dir = match &self.dataset {
            Some(d) => d.clone(),
            None => {
                let root = std::env::var_os(DATA_DIR_ENV).ok_or_else(|| {
                    Error::validation(format!("pass --dataset or set {DATA_DIR_ENV}"))
                })?;
                PathBuf::from(root).join(self.region.to_ascii_lowercase())
            }
        };
        Dataset::load(&dir)
    }
}

#[derive(Args)]
struct IngestArgs {
    /// Google community mobility report CSV.
    #[arg(long)]
    mobility: PathBuf,
    /// Deaths CSV with columns date,age_band,count.
    #[arg(long)]
    deaths: PathBuf,
    /// Hospital CSV with columns date,occupancy.
    #[arg(long)]
    hospital: PathBuf,
    /// Country or first-level sub-region name as written in the mobility file.
    #[arg(long)]
    region: String,
    /// Calendar preset (england, france); defaults to the region name.
    #[arg(long)]
    calendar: Option<String>,
    /// Contact matrix file; defaults to the bundled England matrices.
    #[arg(long)]
    contacts: Option<PathBuf>,
    /// Census file; defaults to the bundled England census.
    #[arg(long)]
    census: Option<PathBuf>,
    /// JSON object mapping unusual age-band labels to groups 1-5.
    #[arg(long)]
    age_map: Option<PathBuf>,
    /// Mark the health series as model-generated.
    #[arg(long)]
    synthetic: bool,
    /// Free-text note stored in the manifest; repeatable.
    #[arg(long)]
    note: Vec<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AbcArgs {
    /// JSON prior specification; defaults to uniform priors.
    #[arg(long)]
    prior: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    generations: usize,
    #[arg(long, default_value_t = 100)]
    particles: usize,
    /// Quantile of the previous distances used as the next tolerance.
    #[arg(long, default_value_t = 0.5)]
    quantile: f64,
}

impl AbcArgs {
    fn config(&self, seed: u64) -> AbcConfig {
        AbcConfig {
            generations: self.generations,
            particles: self.particles,
            quantile: self.quantile,
            seed,
            ..Default::default()
        }
    }

    fn prior(&self) -> Result<PriorSpecification> {
        match &self.prior {
            Some(p) => read_json(p),
            None => Ok(PriorSpecification::default()),
        }
    }
}

#[derive(Args)]
struct CalibrateArgs {
    #[command(flatten)]
    dataset: DatasetArgs,
    #[command(flatten)]
    abc: AbcArgs,
    /// Fit only observation days 1..=DAY.
    #[arg(long)]
    until_day: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Ensemble JSON to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    dataset: DatasetArgs,
    /// Posterior ensemble to draw parameters from; without it the bundled
    /// posterior means are used.
    #[arg(long)]
    ensemble: Option<PathBuf>,
    /// Posterior draws used for the bands.
    #[arg(long, default_value_t = 50)]
    samples: usize,
    /// Days to simulate; defaults to the end of the mobility series.
    #[arg(long)]
    days: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ControlArgs {
    #[arg(long, default_value_t = 100.0)]
    eps_school: f64,
    #[arg(long, default_value_t = 100.0)]
    eps_work: f64,
    #[arg(long, default_value_t = 100.0)]
    eps_other: f64,
    /// Days of control, T_h.
    #[arg(long, default_value_t = 120)]
    horizon: usize,
    /// Look-ahead of each optimisation, T_opt.
    #[arg(long, default_value_t = 30)]
    pred_horizon: usize,
    /// Days per piecewise-constant control block.
    #[arg(long, default_value_t = 10)]
    blocks: usize,
    /// Objective evaluations per optimisation.
    #[arg(long, default_value_t = 2000)]
    budget: usize,
    /// Posterior draws in the expected cost.
    #[arg(long, default_value_t = 50)]
    samples: usize,
    #[arg(long, default_value_t = DEFAULT_H_MAX)]
    h_max: f64,
    /// School bounds as LOW,HIGH.
    #[arg(long, value_parser = parse_bounds, default_value = "0.1,1")]
    school_bounds: ChannelBounds,
    /// Work bounds as LOW,HIGH.
    #[arg(long, value_parser = parse_bounds, default_value = "0.31,1")]
    work_bounds: ChannelBounds,
    /// Other-activity bounds as LOW,HIGH.
    #[arg(long, value_parser = parse_bounds, default_value = "0.41,1")]
    other_bounds: ChannelBounds,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl ControlArgs {
    fn config(&self, receding: bool) -> Result<OptimizationConfig> {
        if self.pred_horizon == 0 || self.pred_horizon > self.horizon {
            return Err(Error::validation(format!(
                "need 0 < --pred-horizon <= --horizon, got {} and {}",
                self.pred_horizon, self.horizon
            )));
        }
        let config = OptimizationConfig {
            horizon: self.horizon,
            prediction_horizon: if receding {
                self.pred_horizon
            } else {
                self.horizon
            },
            posterior_samples: self.samples,
            h_max: self.h_max,
            block_length: self.blocks,
            budget: self.budget,
            seed: self.seed,
            receding,
            weights: CostWeights::new(self.eps_school, self.eps_work, self.eps_other),
            bounds: ControlBounds {
                school: self.school_bounds,
                work: self.work_bounds,
                other: self.other_bounds,
            },
        };
        config.validate()?;
        Ok(config)
    }
}

fn parse_bounds(s: &str) -> std::result::Result<ChannelBounds, String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected LOW,HIGH, got {s:?}"))?;
    let num = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}"));
    Ok(ChannelBounds {
        lower: num(a)?,
        upper: num(b)?,
    })
}

#[derive(Args)]
struct OptimizeArgs {
    #[command(flatten)]
    dataset: DatasetArgs,
    /// Posterior ensemble JSON.
    #[arg(long)]
    ensemble: PathBuf,
    /// First controlled day; defaults to the last observed day.
    #[arg(long)]
    t0: Option<usize>,
    #[command(flatten)]
    control: ControlArgs,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct UpdateArgs {
    /// Dataset with the extended observations.
    #[command(flatten)]
    dataset: DatasetArgs,
    /// Ensemble from the previous calibration.
    #[arg(long)]
    ensemble: PathBuf,
    #[command(flatten)]
    abc: AbcArgs,
    #[command(flatten)]
    control: ControlArgs,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

/// Prints progress to stderr in 5% steps.
struct StderrProgress {
    last: Mutex<i64>,
    enabled: bool,
}

impl StderrProgress {
    fn new(enabled: bool) -> Self {
        Self {
            last: Mutex::new(-1),
            enabled,
        }
    }
}

impl Monitor for StderrProgress {
    fn is_cancelled(&self) -> bool {
        false
    }

    fn progress(&self, fraction: f64, message: &str) {
        if !self.enabled {
            return;
        }
        let step = (fraction * 20.0).floor() as i64;
        let mut last = self.last.lock().unwrap_or_else(|e| e.into_inner());
        if step > *last {
            *last = step;
            eprintln!("[{:>3.0}%] {message}", fraction * 100.0);
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e.to_string()))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Vec<u8> {
    let mut buf = Vec::new();
    f(&mut buf).expect("in-memory write");
    buf
}

fn cmd_ingest(args: &IngestArgs) -> Result<()> {
    let calendar_name = args.calendar.as_deref().unwrap_or(&args.region);
    let calendar = CountryPreset::by_name(calendar_name).ok_or_else(|| {
        Error::validation(format!(
            "no calendar preset for {calendar_name:?}; pass --calendar england or france"
        ))
    })?;
    let contacts = match &args.contacts {
        Some(p) => load_contact_matrices(p, None)?,
        None => england_contacts(),
    };
    let census = match &args.census {
        Some(p) => load_census(p, None)?,
        None => england_census(),
    };
    let mapping = match &args.age_map {
        Some(p) => AgeBandMapping {
            overrides: read_json(p)?,
        },
        None => AgeBandMapping::default(),
    };
    let sources = IngestSources {
        mobility: &args.mobility,
        deaths: &args.deaths,
        hospital: &args.hospital,
    };
    let mut ds = ingest(sources, &args.region, calendar, &mapping, contacts, census)?;
    ds.synthetic = args.synthetic;
    ds.notes = args.note.clone();
    let manifest = ds.save(&args.out)?;
    let report = ds.ingest.clone().unwrap_or_default();
    println!("region            {}", manifest.region);
    println!("observed days     {}", manifest.horizon);
    println!("mobility days     {}", ds.mobility.levels.len());
    println!(
        "mobility rows     read {} matched {} dropped {}",
        report.mobility.rows_read, report.mobility.rows_matched, report.mobility.rows_dropped
    );
    println!(
        "mobility cells    interpolated {} clamped {}",
        report.pipeline.interpolated, report.pipeline.clamped
    );
    println!(
        "health rows       deaths {} hospital {} before start {}",
        report.health.death_rows, report.health.hospital_rows, report.health.rows_before_start
    );
    Ok(())
}

fn cmd_calibrate(args: &CalibrateArgs, monitor: &dyn Monitor) -> Result<()> {
    let ds = args.dataset.load()?;
    let config = args.abc.config(args.seed);
    config.validate()?;
    let prior = args.abc.prior()?;
    let obs = match args.until_day {
        Some(d) if d == 0 || d > ds.horizon() => {
            return Err(Error::validation(format!(
                "--until-day must lie in 1..={}",
                ds.horizon()
            )))
        }
        Some(d) => ds.observations.truncated(d),
        None => ds.observations.clone(),
    };
    let runner = ds.runner()?;
    let ensemble = pmc_abc(&runner, &obs, &prior, &config, monitor)?;
    ensemble.save(&args.out)?;
    for w in &ensemble.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "generation {} tolerance {:.6e} particles {}",
        ensemble.generation,
        ensemble.tolerance,
        ensemble.len()
    );
    print!("{}", posterior_summary(&ensemble)?.table());
    Ok(())
}

fn simulation_samples(args: &SimulateArgs) -> Result<Vec<EpidemicParameters>> {
    match &args.ensemble {
        Some(p) => {
            if args.samples == 0 {
                return Err(Error::validation("--samples must be >= 1"));
            }
            bootstrap_resample(&PosteriorEnsemble::load(p)?, args.samples, args.seed)
        }
        None => Ok(vec![EpidemicParameters::england_may_posterior_mean()]),
    }
}

fn historical(args: &SimulateArgs) -> Result<Vec<BandRow>> {
    let ds = args.dataset.load()?;
    let days = args.days.unwrap_or(ds.mobility.end_day());
    historical_bands(&ds.runner()?, &simulation_samples(args)?, days)
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let rows = historical(args)?;
    write_file(&args.out, &csv_bytes(|b| write_bands_csv(&rows, b)))
}

fn cmd_r_trajectory(args: &SimulateArgs) -> Result<()> {
    let rows = historical(args)?;
    write_file(
        &args.out,
        &csv_bytes(|b| write_band_series_csv(&rows, BandSeries::R, b)),
    )
}

fn write_plan(out: &Path, artifact: &OptimizationArtifact) -> Result<()> {
    let rows = &artifact.result.bands;
    let mut json = serde_json::to_string_pretty(artifact)?;
    json.push('\n');
    write_file(&out.join("optimization.json"), json.as_bytes())?;
    write_file(
        &out.join("schedule.csv"),
        artifact.schedule_csv().as_bytes(),
    )?;
    for (name, series) in [
        ("hospitalised_bands.csv", BandSeries::Hospitalised),
        ("deaths_bands.csv", BandSeries::Deaths),
        ("r_bands.csv", BandSeries::R),
    ] {
        write_file(
            &out.join(name),
            &csv_bytes(|b| write_band_series_csv(rows, series, b)),
        )?;
    }
    Ok(())
}

fn print_plan(result: &NmpcResult) {
    let c = &result.realized_cost;
    println!("t0                {}", result.t0);
    println!("days              {}", result.schedule.len());
    println!(
        "expected cost     {:.6e} (sanitary {:.6e}, economic {:.6e}, terminal R {:.4})",
        c.total, c.sanitary, c.economic, c.terminal_r
    );
}

fn cmd_optimize(args: &OptimizeArgs, receding: bool, monitor: &dyn Monitor) -> Result<()> {
    let ds = args.dataset.load()?;
    let config = args.control.config(receding)?;
    let ensemble = PosteriorEnsemble::load(&args.ensemble)?;
    let t0 = args.t0.unwrap_or(ds.horizon());
    let result = plan_from_ensemble(&ds.runner()?, &ensemble, t0, &config, monitor)?;
    print_plan(&result);
    let reference = args.ensemble.display().to_string();
    write_plan(
        &args.out,
        &OptimizationArtifact::new(config, Some(reference), result),
    )
}

fn cmd_update(args: &UpdateArgs, monitor: &dyn Monitor) -> Result<()> {
    let ds = args.dataset.load()?;
    let previous = PosteriorEnsemble::load(&args.ensemble)?;
    let optimization = args.control.config(true)?;
    let abc = args.abc.config(args.control.seed);
    let outcome = dynamic_update(
        &ds.runner()?,
        previous.observation_horizon,
        &ds.observations,
        &args.abc.prior()?,
        &abc,
        &optimization,
        monitor,
    )?;
    match outcome {
        UpdateOutcome::Rejected { reason } => {
            Err(Error::validation(format!("update rejected: {reason}")))
        }
        UpdateOutcome::Updated { ensemble, nmpc, .. } => {
            ensemble.save(&args.out.join("ensemble.json"))?;
            print!("{}", posterior_summary(&ensemble)?.table());
            print_plan(&nmpc);
            let reference = args.out.join("ensemble.json").display().to_string();
            write_plan(
                &args.out,
                &OptimizationArtifact::new(optimization, Some(reference), *nmpc),
            )
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    let progress = StderrProgress::new(!cli.quiet);
    let monitor: &dyn Monitor = if cli.quiet { &Silent } else { &progress };
    match &cli.command {
        Command::Ingest(a) => cmd_ingest(a),
        Command::Calibrate(a) => cmd_calibrate(a, monitor),
        Command::Simulate(a) => cmd_simulate(a),
        Command::RTrajectory(a) => cmd_r_trajectory(a),
        Command::Optimize(a) => cmd_optimize(a, false, monitor),
        Command::Nmpc(a) => cmd_optimize(a, true, monitor),
        Command::Update(a) => cmd_update(a, monitor),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 3 })
        }
    }
}
