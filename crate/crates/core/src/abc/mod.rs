//! Likelihood-free calibration: priors, the trajectory distance, rejection
//! ABC and population Monte Carlo ABC.

mod distance;
mod ensemble;
mod pmc;
mod prior;
mod runner;

pub use distance::{distance, observe, DistanceWeights, HOSPITAL_FIRST_DAY};
pub use ensemble::{
    bootstrap_resample, posterior_summary, EnsembleStatus, GenerationSummary, Particle,
    PosteriorEnsemble, PosteriorSummary, ENSEMBLE_SCHEMA_VERSION,
};
pub use pmc::{abc_rejection, pmc_abc, quantile, AbcConfig};
pub use prior::{ParameterPrior, PriorFamily, PriorSpecification};
pub use runner::{ModelRunner, SimulatorRunner};
