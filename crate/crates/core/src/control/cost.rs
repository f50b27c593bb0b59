use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ControlSchedule;
use crate::error::{Error, Result};
use crate::model::{CompartmentState, EpidemicParameters, Simulator, Trajectory};
use crate::repro::reproduction_number;

/// Relative economic cost of restricting each channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostWeights {
    pub eps_school: f64,
    pub eps_work: f64,
    pub eps_other: f64,
}

impl CostWeights {
    pub fn new(eps_school: f64, eps_work: f64, eps_other: f64) -> Self {
        Self {
            eps_school,
            eps_work,
            eps_other,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("eps_school", self.eps_school),
            ("eps_work", self.eps_work),
            ("eps_other", self.eps_other),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::validation(format!("{name} must be finite and >= 0")));
            }
        }
        Ok(())
    }
}

pub const DEFAULT_H_MAX: f64 = 10_000.0;

/// Occupancy above capacity: `max(i_c - h_max, 0)`.
pub fn hospital_penalty(i_c: f64, h_max: f64) -> f64 {
    (i_c - h_max).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub total: f64,
    /// Mean over samples of `0.5 * sum_t (deaths + capacity excess)`.
    pub sanitary: f64,
    pub economic: f64,
    /// Mean over samples of R under the last day's contacts.
    pub terminal_r: f64,
}

/// Posterior samples, their states at `t0`, and everything else the cost
/// needs besides the schedule.
#[derive(Debug, Clone, Copy)]
pub struct ControlProblem<'a> {
    pub simulator: &'a Simulator,
    pub samples: &'a [EpidemicParameters],
    pub initial_states: &'a [CompartmentState],
    pub weights: CostWeights,
    pub h_max: f64,
}

impl ControlProblem<'_> {
    pub fn validate(&self) -> Result<()> {
        if self.samples.is_empty() {
            return Err(Error::validation(
                "at least one posterior sample is required",
            ));
        }
        if self.samples.len() != self.initial_states.len() {
            return Err(Error::validation(format!(
                "{} samples but {} initial states",
                self.samples.len(),
                self.initial_states.len()
            )));
        }
        if !(self.h_max >= 0.0) {
            return Err(Error::validation("h_max must be >= 0"));
        }
        self.weights.validate()
    }

    /// Runs sample `k` through `schedule` from its state at `schedule.start_day`.
    pub fn simulate_sample(&self, k: usize, schedule: &ControlSchedule) -> Result<Trajectory> {
        let params = &self.samples[k];
        self.simulator.advance(
            params,
            self.initial_states[k],
            schedule.start_day,
            schedule.len(),
            |day| {
                let m = schedule.level(day).expect("day inside schedule");
                Ok(self.simulator.lockdown_matrix(params, &m))
            },
        )
    }

    fn sample_terms(&self, k: usize, schedule: &ControlSchedule) -> Result<(f64, f64)> {
        let traj = self.simulate_sample(k, schedule)?;
        let mut sanitary = 0.0;
        for (dd, ic) in traj.new_deaths.iter().zip(&traj.hospitalised[1..]) {
            sanitary += 0.5 * (dd.iter().sum::<f64>() + hospital_penalty(*ic, self.h_max));
        }
        let params = &self.samples[k];
        let last = schedule.days.last().expect("non-empty schedule");
        let c = self.simulator.lockdown_matrix(params, last);
        let r = reproduction_number(params, &c, &self.simulator.census)?;
        Ok((sanitary, r))
    }
}

/// Economic part of the cost, independent of the epidemic.
pub fn economic_cost(schedule: &ControlSchedule, w: &CostWeights) -> f64 {
    schedule
        .days
        .iter()
        .map(|m| {
            0.5 * (w.eps_school * (1.0 - m.school).powi(2)
                + w.eps_work * (1.0 - m.work).powi(2)
                + w.eps_other * (1.0 - m.other).powi(2))
        })
        .sum()
}

/// Expected sanitary cost plus economic cost plus expected terminal R.
/// Samples are simulated in parallel and reduced in sample order.
pub fn evaluate_cost(
    problem: &ControlProblem<'_>,
    schedule: &ControlSchedule,
) -> Result<CostBreakdown> {
    problem.validate()?;
    if schedule.is_empty() {
        return Err(Error::validation("schedule covers no days"));
    }
    let terms: Vec<(f64, f64)> = (0..problem.samples.len())
        .into_par_iter()
        .map(|k| problem.sample_terms(k, schedule))
        .collect::<Result<_>>()?;
    let n = terms.len() as f64;
    let sanitary = terms.iter().map(|t| t.0).sum::<f64>() / n;
    let terminal_r = terms.iter().map(|t| t.1).sum::<f64>() / n;
    let economic = economic_cost(schedule, &problem.weights);
    Ok(CostBreakdown {
        total: sanitary + economic + terminal_r,
        sanitary,
        economic,
        terminal_r,
    })
}
