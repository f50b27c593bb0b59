use serde::{Deserialize, Serialize};

use super::dynamics::{initialize_state, rates, rk4_step, TransmissionKernel};
use super::{
    AlphaMultipliers, CompartmentState, ContactMatrix, ContactMatrixSet, EpidemicParameters,
    PopulationCensus, AGE_GROUPS,
};
use crate::error::{Error, Result};
use crate::mobility::{MobilityLevels, MobilitySeries};

pub const DEFAULT_STEPS_PER_DAY: usize = 10;

/// Daily samples of one integrated trajectory.
///
/// `states[k]` is the state at the end of day `start_day + k - 1`, i.e. at
/// model time `start_day + k`. `new_deaths[k]` and `hospitalised[k + 1]`
/// are the observables of day index `start_day + k + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub start_day: usize,
    pub states: Vec<CompartmentState>,
    /// ΔD_i(t) = D_i(t) - D_i(t-1), one entry per simulated day.
    pub new_deaths: Vec<[f64; AGE_GROUPS]>,
    /// I^C_tot at every sampled state, including the initial one.
    pub hospitalised: Vec<f64>,
}

impl Trajectory {
    fn from_states(start_day: usize, states: Vec<CompartmentState>) -> Self {
        let new_deaths = states
            .windows(2)
            .map(|w| {
                let mut dd = [0.0; AGE_GROUPS];
                for (i, v) in dd.iter_mut().enumerate() {
                    *v = w[1].d[i] - w[0].d[i];
                }
                dd
            })
            .collect();
        let hospitalised = states.iter().map(CompartmentState::hospitalised).collect();
        Self {
            start_day,
            states,
            new_deaths,
            hospitalised,
        }
    }

    pub fn end_day(&self) -> usize {
        self.start_day + self.states.len() - 1
    }

    pub fn final_state(&self) -> &CompartmentState {
        self.states
            .last()
            .expect("trajectory holds at least one state")
    }

    /// State at model time `t`, if sampled.
    pub fn at(&self, t: usize) -> Option<&CompartmentState> {
        t.checked_sub(self.start_day)
            .and_then(|k| self.states.get(k))
    }

    pub fn peak_hospitalised(&self) -> f64 {
        self.hospitalised.iter().copied().fold(0.0, f64::max)
    }
}

/// Deterministic RK4 integrator of the SEI4RD model for one population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Simulator {
    pub contacts: ContactMatrixSet,
    pub census: PopulationCensus,
    pub steps_per_day: usize,
}

impl Simulator {
    pub fn new(contacts: ContactMatrixSet, census: PopulationCensus) -> Result<Self> {
        contacts.validate()?;
        census.validate()?;
        Ok(Self {
            contacts,
            census,
            steps_per_day: DEFAULT_STEPS_PER_DAY,
        })
    }

    pub fn with_steps_per_day(mut self, steps: usize) -> Self {
        self.steps_per_day = steps.max(1);
        self
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.steps_per_day as f64
    }

    /// Contact matrix for one day of lockdown at mobility `levels`.
    pub fn lockdown_matrix(
        &self,
        params: &EpidemicParameters,
        levels: &MobilityLevels,
    ) -> ContactMatrix {
        let alphas = AlphaMultipliers::from_mobility(
            levels.school,
            levels.work,
            levels.other,
            params.alpha_123,
            params.alpha_4,
            params.alpha_5,
        );
        self.contacts.assemble(&alphas)
    }

    /// Historical contact matrix for `day`: the baseline before
    /// `lockdown_start`, the mobility-driven assembly from then on.
    pub fn historical_matrix(
        &self,
        params: &EpidemicParameters,
        mobility: &MobilitySeries,
        lockdown_start: usize,
        day: usize,
    ) -> Result<ContactMatrix> {
        if day < lockdown_start {
            return Ok(self.contacts.baseline());
        }
        let levels = mobility
            .get(day)
            .ok_or_else(|| Error::validation(format!("no mobility data for day {day}")))?;
        Ok(self.lockdown_matrix(params, &levels))
    }

    /// Integrates `n_days` whole days from `state0` at model time
    /// `first_day`. The matrix for each day is held fixed over its substeps.
    pub fn advance<F>(
        &self,
        params: &EpidemicParameters,
        state0: CompartmentState,
        first_day: usize,
        n_days: usize,
        mut matrix_for_day: F,
    ) -> Result<Trajectory>
    where
        F: FnMut(usize) -> Result<ContactMatrix>,
    {
        let dt = self.dt();
        let mut states = Vec::with_capacity(n_days + 1);
        states.push(state0);
        let mut state = state0;
        for day in first_day..first_day + n_days {
            let c = matrix_for_day(day)?;
            let kernel = TransmissionKernel::new(params.beta, &c, &self.census)?;
            for step in 0..self.steps_per_day {
                let t = day as f64 + step as f64 * dt;
                state = rk4_step(&state, t, dt, |_, x| rates(x, params, &kernel));
            }
            states.push(state);
        }
        Ok(Trajectory::from_states(first_day, states))
    }

    /// Full historical run from `start_day` (seeded with `initialize_state`)
    /// to `end_day`.
    pub fn simulate(
        &self,
        params: &EpidemicParameters,
        mobility: &MobilitySeries,
        start_day: usize,
        end_day: usize,
        lockdown_start_day: usize,
    ) -> Result<Trajectory> {
        params.validate()?;
        if start_day > end_day {
            return Err(Error::validation(format!(
                "start day {start_day} after end day {end_day}"
            )));
        }
        if lockdown_start_day < end_day {
            let from = lockdown_start_day.max(start_day);
            let missing = mobility.missing_days(from, end_day);
            if !missing.is_empty() {
                return Err(Error::validation(format!(
                    "mobility series missing days {}",
                    format_day_list(&missing)
                )));
            }
        }
        let state0 = initialize_state(params, &self.census)?;
        self.advance(params, state0, start_day, end_day - start_day, |day| {
            self.historical_matrix(params, mobility, lockdown_start_day, day)
        })
    }

    /// Full-resolution right-hand side, mainly for diagnostics.
    pub fn derivative(
        &self,
        state: &CompartmentState,
        params: &EpidemicParameters,
        c: &ContactMatrix,
    ) -> Result<CompartmentState> {
        super::derivative(state, params, c, &self.census)
    }
}

fn format_day_list(days: &[usize]) -> String {
    const SHOWN: usize = 20;
    let mut s: Vec<String> = days.iter().take(SHOWN).map(|d| d.to_string()).collect();
    if days.len() > SHOWN {
        s.push(format!("... ({} total)", days.len()));
    }
    s.join(", ")
}
