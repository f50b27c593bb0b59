use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mobility::ObservationSet;
use crate::model::{Trajectory, AGE_GROUPS};

/// First model day whose hospital occupancy enters the distance.
pub const HOSPITAL_FIRST_DAY: usize = 18;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistanceWeights {
    pub w_d: [f64; AGE_GROUPS],
    pub w_i: f64,
}

impl Default for DistanceWeights {
    fn default() -> Self {
        Self {
            w_d: [1.0, 1.0, 1.0, 2.0, 2.0],
            w_i: 0.1,
        }
    }
}

impl DistanceWeights {
    pub fn validate(&self) -> Result<()> {
        if self
            .w_d
            .iter()
            .chain(std::iter::once(&self.w_i))
            .any(|w| !w.is_finite() || *w < 0.0)
        {
            return Err(Error::validation(
                "distance weights must be finite and >= 0",
            ));
        }
        Ok(())
    }
}

/// Weighted sum of squared errors between daily deaths per group and, from
/// day 18 on, total hospital occupancy on days where `obs` reports it.
pub fn distance(sim: &ObservationSet, obs: &ObservationSet, w: &DistanceWeights) -> Result<f64> {
    if sim.horizon() != obs.horizon() {
        return Err(Error::validation(format!(
            "simulation covers days 1..={} but observations cover 1..={}",
            sim.horizon(),
            obs.horizon()
        )));
    }
    let mut d_deaths = [0.0; AGE_GROUPS];
    for (s, o) in sim.deaths.iter().zip(&obs.deaths) {
        for i in 0..AGE_GROUPS {
            d_deaths[i] += (s[i] - o[i]).powi(2);
        }
    }
    let mut d_hosp = 0.0;
    for t in HOSPITAL_FIRST_DAY..=obs.horizon() {
        if let Some(o) = obs.hospitalised_on(t) {
            let s = sim.hospitalised_on(t).ok_or_else(|| {
                Error::validation(format!("simulation lacks hospital occupancy for day {t}"))
            })?;
            d_hosp += (s - o).powi(2);
        }
    }
    Ok(d_deaths.iter().zip(&w.w_d).map(|(d, w)| d * w).sum::<f64>() + w.w_i * d_hosp)
}

/// Observation-shaped view of a trajectory started at model time 0:
/// day `t` gets `D(t) - D(t-1)` and `I^C_tot(t)`.
pub fn observe(traj: &Trajectory, horizon: usize) -> Result<ObservationSet> {
    if traj.start_day != 0 || traj.end_day() < horizon {
        return Err(Error::validation(format!(
            "trajectory spans [{}, {}], need [0, {horizon}]",
            traj.start_day,
            traj.end_day()
        )));
    }
    Ok(ObservationSet {
        deaths: traj.new_deaths[..horizon].to_vec(),
        hospitalised: traj.hospitalised[1..=horizon]
            .iter()
            .map(|h| Some(*h))
            .collect(),
    })
}
