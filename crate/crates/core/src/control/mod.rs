//! Lockdown optimisation: the expected-cost functional, generalized
//! simulated annealing over block-constant mobility schedules, and the
//! receding-horizon controller.

mod anneal;
mod cost;
mod nmpc;
mod schedule;

pub use anneal::{anneal, AnnealConfig, AnnealResult};
pub use cost::{
    economic_cost, evaluate_cost, hospital_penalty, ControlProblem, CostBreakdown, CostWeights,
    DEFAULT_H_MAX,
};
pub use nmpc::{
    anneal_schedule, dynamic_update, historical_bands, initial_states, nmpc_run,
    plan_from_ensemble, predictive_median, trajectory_bands, write_band_series_csv,
    write_bands_csv, Band, BandRow, BandSeries, NmpcResult, NmpcStep, OptimizationArtifact,
    OptimizationConfig, UpdateOutcome, BAND_QUANTILES, OPTIMIZATION_SCHEMA_VERSION,
};
pub use schedule::{block_count, ChannelBounds, ControlBounds, ControlSchedule};
