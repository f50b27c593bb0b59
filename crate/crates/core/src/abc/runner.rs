use crate::error::Result;
use crate::mobility::{MobilitySeries, ObservationSet};
use crate::model::{EpidemicParameters, Simulator};

use super::distance::observe;

/// Forward model used by calibration. Must be pure and reentrant: the same
/// parameters always give the same output, from any thread.
pub trait ModelRunner: Sync {
    /// Simulated observations for days `1..=horizon`.
    fn run(&self, params: &EpidemicParameters, horizon: usize) -> Result<ObservationSet>;
}

impl<F> ModelRunner for F
where
    F: Fn(&EpidemicParameters, usize) -> Result<ObservationSet> + Sync,
{
    fn run(&self, params: &EpidemicParameters, horizon: usize) -> Result<ObservationSet> {
        self(params, horizon)
    }
}

/// Historical SEI4RD run driven by a mobility series.
#[derive(Debug, Clone)]
pub struct SimulatorRunner {
    pub simulator: Simulator,
    pub mobility: MobilitySeries,
    pub lockdown_start: usize,
}

impl ModelRunner for SimulatorRunner {
    fn run(&self, params: &EpidemicParameters, horizon: usize) -> Result<ObservationSet> {
        let traj =
            self.simulator
                .simulate(params, &self.mobility, 0, horizon, self.lockdown_start)?;
        observe(&traj, horizon)
    }
}
