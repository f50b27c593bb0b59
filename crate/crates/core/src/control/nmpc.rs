use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::anneal::{anneal, AnnealConfig};
use super::cost::{evaluate_cost, ControlProblem, CostBreakdown, CostWeights, DEFAULT_H_MAX};
use super::schedule::{block_count, ControlBounds, ControlSchedule};
use crate::abc::{
    bootstrap_resample, pmc_abc, quantile, AbcConfig, ModelRunner, PosteriorEnsemble,
    PriorSpecification, SimulatorRunner,
};
use crate::error::{Error, Result};
use crate::format::sig12;
use crate::mobility::{MobilityLevels, MobilitySeries, ObservationSet};
use crate::model::{initialize_state, CompartmentState, EpidemicParameters, Simulator};
use crate::monitor::{Monitor, Prefixed, Scaled};
use crate::repro::reproduction_number;
use crate::rng::stream_rng;

const NMPC_SEED_STREAM: u64 = 0x4e4d_5043;
pub const BAND_QUANTILES: (f64, f64) = (0.005, 0.995);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizationConfig {
    /// Days of control to produce, `T_h`.
    pub horizon: usize,
    /// Look-ahead of each optimisation, `T_opt`.
    pub prediction_horizon: usize,
    pub posterior_samples: usize,
    pub h_max: f64,
    /// Days per piecewise-constant control block.
    pub block_length: usize,
    /// Objective evaluations per optimisation.
    pub budget: usize,
    pub seed: u64,
    /// `false` optimises the whole horizon once and applies it open loop.
    pub receding: bool,
    pub weights: CostWeights,
    pub bounds: ControlBounds,
}

impl Default for OptimizationConfig {
    fn default() -> Self {
        Self {
            horizon: 120,
            prediction_horizon: 30,
            posterior_samples: 50,
            h_max: DEFAULT_H_MAX,
            block_length: 10,
            budget: 2000,
            seed: 0,
            receding: true,
            weights: CostWeights::new(100.0, 100.0, 100.0),
            bounds: ControlBounds::default(),
        }
    }
}

impl OptimizationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.prediction_horizon == 0 || self.prediction_horizon > self.horizon {
            return Err(Error::validation(format!(
                "need 0 < prediction_horizon <= horizon, got {} and {}",
                self.prediction_horizon, self.horizon
            )));
        }
        if self.posterior_samples == 0 {
            return Err(Error::validation("posterior_samples must be >= 1"));
        }
        if self.block_length == 0 {
            return Err(Error::validation("block_length must be >= 1"));
        }
        if self.budget == 0 {
            return Err(Error::validation("budget must be >= 1"));
        }
        if !(self.h_max >= 0.0) {
            return Err(Error::validation("h_max must be >= 0"));
        }
        self.weights.validate()?;
        self.bounds.validate()
    }
}

/// Minimises `objective` over block-constant schedules on
/// `[start_day, start_day + n_days)`.
#[allow(clippy::too_many_arguments)]
pub fn anneal_schedule(
    objective: &mut dyn FnMut(&ControlSchedule) -> Result<f64>,
    start_day: usize,
    n_days: usize,
    block_length: usize,
    bounds: &ControlBounds,
    budget: usize,
    seed: u64,
    warm_start: Option<&[f64]>,
    monitor: &dyn Monitor,
) -> Result<(ControlSchedule, f64, usize)> {
    bounds.validate()?;
    let blocks = block_count(n_days, block_length);
    let (lo, hi) = bounds.block_box(blocks);
    let x0 = warm_start.map(|w| resize_blocks(w, blocks));
    let mut f = |x: &[f64]| {
        let s = ControlSchedule::from_blocks(start_day, n_days, block_length, x)?;
        objective(&s)
    };
    let cfg = AnnealConfig {
        budget,
        seed,
        ..Default::default()
    };
    let r = anneal(&mut f, &lo, &hi, x0.as_deref(), &cfg, monitor)?;
    let schedule =
        ControlSchedule::from_blocks(start_day, n_days, block_length, &r.x)?.clipped(bounds);
    Ok((schedule, r.cost, r.evaluations))
}

/// Adapts a channel-major block vector to a different block count by
/// truncating or repeating each channel's last block.
fn resize_blocks(x: &[f64], blocks: usize) -> Vec<f64> {
    let old = x.len() / 3;
    if old == blocks || old == 0 {
        return x.to_vec();
    }
    let mut out = Vec::with_capacity(3 * blocks);
    for c in 0..3 {
        for b in 0..blocks {
            out.push(x[c * old + b.min(old - 1)]);
        }
    }
    out
}

/// Each sample's state at model time `t0`, integrated from its own seeding
/// under historical mobility.
pub fn initial_states(
    simulator: &Simulator,
    samples: &[EpidemicParameters],
    mobility: &MobilitySeries,
    lockdown_start: usize,
    t0: usize,
) -> Result<Vec<CompartmentState>> {
    samples
        .par_iter()
        .map(|p| {
            if t0 == 0 {
                return initialize_state(p, &simulator.census);
            }
            let traj = simulator.simulate(p, mobility, 0, t0, lockdown_start)?;
            Ok(*traj.final_state())
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lower: f64,
    pub median: f64,
    pub upper: f64,
}

impl Band {
    pub fn of(values: &[f64]) -> Band {
        Band {
            lower: quantile(values, BAND_QUANTILES.0).unwrap_or(f64::NAN),
            median: quantile(values, 0.5).unwrap_or(f64::NAN),
            upper: quantile(values, BAND_QUANTILES.1).unwrap_or(f64::NAN),
        }
    }
}

/// Spread over posterior samples on control day `day`: occupancy and daily
/// deaths at the end of the day, R under that day's contacts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandRow {
    pub day: usize,
    pub hospitalised: Band,
    pub deaths: Band,
    pub r: Band,
}

pub fn write_bands_csv<W: Write>(rows: &[BandRow], mut w: W) -> std::io::Result<()> {
    writeln!(
        w,
        "day,ic_lower,ic_median,ic_upper,deaths_lower,deaths_median,deaths_upper,r_lower,r_median,r_upper"
    )?;
    for r in rows {
        let cells: Vec<String> = [r.hospitalised, r.deaths, r.r]
            .iter()
            .flat_map(|b| [b.lower, b.median, b.upper])
            .map(sig12)
            .collect();
        writeln!(w, "{},{}", r.day, cells.join(","))?;
    }
    Ok(())
}

/// One column group of a [`BandRow`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandSeries {
    Hospitalised,
    Deaths,
    R,
}

impl BandSeries {
    pub fn of(self, row: &BandRow) -> Band {
        match self {
            BandSeries::Hospitalised => row.hospitalised,
            BandSeries::Deaths => row.deaths,
            BandSeries::R => row.r,
        }
    }
}

/// `day,lower,median,upper` for one series.
pub fn write_band_series_csv<W: Write>(
    rows: &[BandRow],
    series: BandSeries,
    mut w: W,
) -> std::io::Result<()> {
    writeln!(w, "day,lower,median,upper")?;
    for r in rows {
        let b = series.of(r);
        writeln!(
            w,
            "{},{},{},{}",
            r.day,
            sig12(b.lower),
            sig12(b.median),
            sig12(b.upper)
        )?;
    }
    Ok(())
}

/// Bands over `samples` for days `0..end_day` of the historical run, with R
/// under each day's historical contacts.
pub fn historical_bands(
    runner: &SimulatorRunner,
    samples: &[EpidemicParameters],
    end_day: usize,
) -> Result<Vec<BandRow>> {
    if samples.is_empty() {
        return Err(Error::validation(
            "at least one parameter sample is required",
        ));
    }
    let sim = &runner.simulator;
    let per_sample: Vec<[Vec<f64>; 3]> = samples
        .par_iter()
        .map(|p| {
            let traj = sim.simulate(p, &runner.mobility, 0, end_day, runner.lockdown_start)?;
            let r = (0..end_day)
                .map(|d| {
                    let c = sim.historical_matrix(p, &runner.mobility, runner.lockdown_start, d)?;
                    reproduction_number(p, &c, &sim.census)
                })
                .collect::<Result<Vec<_>>>()?;
            let deaths = traj.new_deaths.iter().map(|d| d.iter().sum()).collect();
            Ok([traj.hospitalised[1..].to_vec(), deaths, r])
        })
        .collect::<Result<_>>()?;
    Ok((0..end_day)
        .map(|d| {
            let col = |k: usize| per_sample.iter().map(|s| s[k][d]).collect::<Vec<_>>();
            BandRow {
                day: d,
                hospitalised: Band::of(&col(0)),
                deaths: Band::of(&col(1)),
                r: Band::of(&col(2)),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NmpcStep {
    pub day: usize,
    pub window_days: usize,
    pub predicted_cost: f64,
    pub evaluations: usize,
    pub applied: MobilityLevels,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NmpcResult {
    pub t0: usize,
    pub schedule: ControlSchedule,
    pub bands: Vec<BandRow>,
    pub steps: Vec<NmpcStep>,
    /// Expected cost of the applied schedule from the states at `t0`.
    pub realized_cost: CostBreakdown,
    /// The run was cancelled after `schedule.len()` applied days.
    #[serde(default)]
    pub cancelled: bool,
}

/// Receding-horizon control. At each day `t` the schedule over
/// `[t, t + T_opt)` is optimised, its first day applied, and every sample
/// advanced one day, until `T_h` days are covered. Windows near the end of
/// the horizon still look `T_opt` days ahead. With `receding = false`
/// the whole horizon is optimised once instead.
pub fn nmpc_run(
    simulator: &Simulator,
    samples: &[EpidemicParameters],
    states_at_t0: &[CompartmentState],
    t0: usize,
    config: &OptimizationConfig,
    monitor: &dyn Monitor,
) -> Result<NmpcResult> {
    config.validate()?;
    let base = ControlProblem {
        simulator,
        samples,
        initial_states: states_at_t0,
        weights: config.weights,
        h_max: config.h_max,
    };
    base.validate()?;

    let mut states = states_at_t0.to_vec();
    let mut applied = Vec::with_capacity(config.horizon);
    let mut steps = Vec::new();
    let mut warm: Option<Vec<f64>> = None;
    let mut cancelled = false;

    if !config.receding {
        let (plan, cost, evals) =
            optimise_window(&base, t0, config.horizon, config, 0, None, monitor)?;
        steps.push(NmpcStep {
            day: t0,
            window_days: config.horizon,
            predicted_cost: cost,
            evaluations: evals,
            applied: plan.days[0],
        });
        applied = plan.days;
    } else {
        for k in 0..config.horizon {
            if monitor.is_cancelled() {
                if applied.is_empty() {
                    return Err(Error::Cancelled);
                }
                cancelled = true;
                break;
            }
            let day = t0 + k;
            let window = config.prediction_horizon;
            let problem = ControlProblem {
                initial_states: &states,
                ..base
            };
            let labelled = Prefixed {
                inner: monitor,
                prefix: format!("day {day} ({}/{})", k + 1, config.horizon),
            };
            let sub = Scaled {
                inner: &labelled,
                start: k as f64 / config.horizon as f64,
                end: (k + 1) as f64 / config.horizon as f64,
            };
            let (plan, cost, evals) = match optimise_window(
                &problem,
                day,
                window,
                config,
                k as u64,
                warm.as_deref(),
                &sub,
            ) {
                Err(Error::Cancelled) if !applied.is_empty() => {
                    cancelled = true;
                    break;
                }
                r => r?,
            };
            let m = plan.days[0];
            warm = Some(plan.to_blocks(config.block_length));
            let today = ControlSchedule::constant(day, 1, m);
            states = (0..samples.len())
                .into_par_iter()
                .map(|i| Ok(*problem.simulate_sample(i, &today)?.final_state()))
                .collect::<Result<_>>()?;
            applied.push(m);
            steps.push(NmpcStep {
                day,
                window_days: window,
                predicted_cost: cost,
                evaluations: evals,
                applied: m,
            });
            log::debug!("nmpc day {day}: applied {m:?}, predicted cost {cost:.6e}");
        }
    }

    let schedule = ControlSchedule {
        start_day: t0,
        days: applied,
    };
    if !schedule.respects(&config.bounds) {
        return Err(Error::Numeric {
            message: "applied schedule left the control bounds".into(),
            residual: f64::NAN,
        });
    }
    let bands = trajectory_bands(&base, &schedule)?;
    let realized_cost = evaluate_cost(&base, &schedule)?;
    if !cancelled {
        monitor.progress(1.0, "optimised");
    }
    Ok(NmpcResult {
        t0,
        schedule,
        bands,
        steps,
        realized_cost,
        cancelled,
    })
}

fn optimise_window(
    problem: &ControlProblem<'_>,
    day: usize,
    n_days: usize,
    config: &OptimizationConfig,
    step: u64,
    warm: Option<&[f64]>,
    monitor: &dyn Monitor,
) -> Result<(ControlSchedule, f64, usize)> {
    let seed = stream_rng(config.seed, NMPC_SEED_STREAM, step).random::<u64>();
    let mut objective = |s: &ControlSchedule| Ok(evaluate_cost(problem, s)?.total);
    anneal_schedule(
        &mut objective,
        day,
        n_days,
        config.block_length,
        &config.bounds,
        config.budget,
        seed,
        warm,
        monitor,
    )
}

/// Per-day sample quantiles along `schedule` from the problem's states.
pub fn trajectory_bands(
    problem: &ControlProblem<'_>,
    schedule: &ControlSchedule,
) -> Result<Vec<BandRow>> {
    let per_sample: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = (0..problem.samples.len())
        .into_par_iter()
        .map(|k| {
            let traj = problem.simulate_sample(k, schedule)?;
            let params = &problem.samples[k];
            let r = schedule
                .days
                .iter()
                .map(|m| {
                    let c = problem.simulator.lockdown_matrix(params, m);
                    reproduction_number(params, &c, &problem.simulator.census)
                })
                .collect::<Result<Vec<_>>>()?;
            let deaths = traj.new_deaths.iter().map(|d| d.iter().sum()).collect();
            Ok((traj.hospitalised[1..].to_vec(), deaths, r))
        })
        .collect::<Result<_>>()?;
    Ok((0..schedule.len())
        .map(|k| {
            let col = |f: fn(&(Vec<f64>, Vec<f64>, Vec<f64>)) -> &Vec<f64>| {
                per_sample.iter().map(|s| f(s)[k]).collect::<Vec<_>>()
            };
            BandRow {
                day: schedule.start_day + k,
                hospitalised: Band::of(&col(|s| &s.0)),
                deaths: Band::of(&col(|s| &s.1)),
                r: Band::of(&col(|s| &s.2)),
            }
        })
        .collect())
}

pub const OPTIMIZATION_SCHEMA_VERSION: u32 = 1;

/// Persisted result of an optimisation or NMPC run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationArtifact {
    pub schema_version: u32,
    pub config: OptimizationConfig,
    pub calibration_ref: Option<String>,
    pub result: NmpcResult,
}

impl OptimizationArtifact {
    pub fn new(
        config: OptimizationConfig,
        calibration_ref: Option<String>,
        result: NmpcResult,
    ) -> Self {
        Self {
            schema_version: OPTIMIZATION_SCHEMA_VERSION,
            config,
            calibration_ref,
            result,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let a: Self = serde_json::from_str(text)?;
        if a.schema_version != OPTIMIZATION_SCHEMA_VERSION {
            return Err(Error::validation(format!(
                "unsupported optimisation schema version {}",
                a.schema_version
            )));
        }
        Ok(a)
    }

    pub fn schedule_csv(&self) -> String {
        let mut buf = Vec::new();
        self.result
            .schedule
            .write_csv(&mut buf)
            .expect("in-memory write");
        String::from_utf8(buf).expect("ascii csv")
    }

    pub fn bands_csv(&self) -> String {
        let mut buf = Vec::new();
        write_bands_csv(&self.result.bands, &mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("ascii csv")
    }
}

/// Outcome of a recalibrate-and-replan request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum UpdateOutcome {
    /// Nothing was recomputed.
    Rejected { reason: String },
    Updated {
        ensemble: Box<PosteriorEnsemble>,
        t0: usize,
        nmpc: Box<NmpcResult>,
    },
}

/// Recalibrates on observations that extend past `previous_horizon`, then
/// re-plans from the new horizon with states re-derived per sample.
pub fn dynamic_update(
    runner: &SimulatorRunner,
    previous_horizon: usize,
    observations: &ObservationSet,
    prior: &PriorSpecification,
    abc: &AbcConfig,
    optimization: &OptimizationConfig,
    monitor: &dyn Monitor,
) -> Result<UpdateOutcome> {
    let t0 = observations.horizon();
    if t0 <= previous_horizon {
        return Ok(UpdateOutcome::Rejected {
            reason: format!(
                "observations end on day {t0}, not after the previous horizon {previous_horizon}"
            ),
        });
    }
    optimization.validate()?;
    let calib = Scaled {
        inner: monitor,
        start: 0.0,
        end: 0.5,
    };
    let ensemble = pmc_abc(runner, observations, prior, abc, &calib)?;
    let plan = Scaled {
        inner: monitor,
        start: 0.5,
        end: 1.0,
    };
    let nmpc = plan_from_ensemble(runner, &ensemble, t0, optimization, &plan)?;
    Ok(UpdateOutcome::Updated {
        ensemble: Box::new(ensemble),
        t0,
        nmpc: Box::new(nmpc),
    })
}

/// Resamples `optimization.posterior_samples` draws from `ensemble`,
/// derives their states at `t0` under historical mobility, and runs the
/// controller from there.
pub fn plan_from_ensemble(
    runner: &SimulatorRunner,
    ensemble: &PosteriorEnsemble,
    t0: usize,
    optimization: &OptimizationConfig,
    monitor: &dyn Monitor,
) -> Result<NmpcResult> {
    optimization.validate()?;
    let samples = bootstrap_resample(ensemble, optimization.posterior_samples, optimization.seed)?;
    let states = initial_states(
        &runner.simulator,
        &samples,
        &runner.mobility,
        runner.lockdown_start,
        t0,
    )?;
    nmpc_run(
        &runner.simulator,
        &samples,
        &states,
        t0,
        optimization,
        monitor,
    )
}

/// Posterior-predictive occupancy of `runner` on days `from..=to` for
/// posterior draws, as medians; used to compare forecasts with held-out data.
pub fn predictive_median(
    runner: &SimulatorRunner,
    samples: &[EpidemicParameters],
    to: usize,
) -> Result<ObservationSet> {
    let sims: Vec<ObservationSet> = samples
        .par_iter()
        .map(|p| runner.run(p, to))
        .collect::<Result<_>>()?;
    let deaths = (0..to)
        .map(|k| {
            let mut row = [0.0; crate::model::AGE_GROUPS];
            for (i, v) in row.iter_mut().enumerate() {
                let col: Vec<f64> = sims.iter().map(|s| s.deaths[k][i]).collect();
                *v = quantile(&col, 0.5).unwrap_or(0.0);
            }
            row
        })
        .collect();
    let hospitalised = (0..to)
        .map(|k| {
            let col: Vec<f64> = sims.iter().filter_map(|s| s.hospitalised[k]).collect();
            quantile(&col, 0.5)
        })
        .collect();
    Ok(ObservationSet {
        deaths,
        hospitalised,
    })
}
