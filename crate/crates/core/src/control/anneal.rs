//! Generalized simulated annealing on a box, following the Tsallis-Stariolo
//! visiting distribution and acceptance rule used by `dual_annealing`,
//! finished by a bounded coordinate pattern search around the best point.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::monitor::Monitor;

const TAIL_LIMIT: f64 = 1e8;
const MIN_VISIT_BOUND: f64 = 1e-10;
/// Chain steps without improvement before jumping back to the best point.
const NOT_IMPROVED_MAX: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnealConfig {
    /// Total objective evaluations, refinement included.
    pub budget: usize,
    pub seed: u64,
    pub initial_temperature: f64,
    pub visiting_param: f64,
    pub acceptance_param: f64,
    pub restart_temperature_ratio: f64,
    /// Share of the budget kept for the final coordinate search.
    pub refine_fraction: f64,
}

impl Default for AnnealConfig {
    fn default() -> Self {
        Self {
            budget: 2000,
            seed: 0,
            initial_temperature: 5230.0,
            visiting_param: 2.62,
            acceptance_param: -5.0,
            restart_temperature_ratio: 2e-5,
            refine_fraction: 0.2,
        }
    }
}

impl AnnealConfig {
    pub fn validate(&self) -> Result<()> {
        if self.budget < 1 {
            return Err(Error::validation("annealing budget must be >= 1"));
        }
        if !(self.visiting_param > 1.0 && self.visiting_param < 3.0) {
            return Err(Error::validation("visiting_param must lie in (1, 3)"));
        }
        if !(self.acceptance_param < 1.0) {
            return Err(Error::validation("acceptance_param must be < 1"));
        }
        if !(self.initial_temperature > 0.0) {
            return Err(Error::validation("initial_temperature must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.refine_fraction) {
            return Err(Error::validation("refine_fraction must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnealResult {
    pub x: Vec<f64>,
    pub cost: f64,
    pub evaluations: usize,
    /// Cost of the starting point.
    pub initial_cost: f64,
}

struct Visiting {
    qv: f64,
    factor4p: f64,
    factor6: f64,
}

impl Visiting {
    fn new(qv: f64) -> Self {
        let pi = std::f64::consts::PI;
        let factor2 = ((4.0 - qv) * (qv - 1.0).ln()).exp();
        let factor3 = ((2.0 - qv) * 2f64.ln() / (qv - 1.0)).exp();
        let factor4p = pi.sqrt() * factor2 / (factor3 * (3.0 - qv));
        let factor5 = 1.0 / (qv - 1.0) - 0.5;
        let d1 = 2.0 - factor5;
        let factor6 = pi * (1.0 - factor5) / (pi * (1.0 - factor5)).sin() / libm::lgamma(d1).exp();
        Self {
            qv,
            factor4p,
            factor6,
        }
    }

    /// One distorted Cauchy-Lorentz step at `temperature`.
    fn step<R: Rng>(&self, temperature: f64, rng: &mut R) -> f64 {
        let qv = self.qv;
        let x: f64 = rng.sample(StandardNormal);
        let y: f64 = rng.sample(StandardNormal);
        let factor1 = (temperature.ln() / (qv - 1.0)).exp();
        let factor4 = self.factor4p * factor1;
        let x = x * (-(qv - 1.0) * (self.factor6 / factor4).ln() / (3.0 - qv)).exp();
        let den = ((qv - 1.0) * y.abs().ln() / (3.0 - qv)).exp();
        let v = x / den;
        if v > TAIL_LIMIT {
            TAIL_LIMIT * rng.random::<f64>()
        } else if v < -TAIL_LIMIT {
            -TAIL_LIMIT * rng.random::<f64>()
        } else if v.is_nan() {
            0.0
        } else {
            v
        }
    }
}

/// Folds `v` back into `[lo, lo + range)` periodically.
fn wrap(v: f64, lo: f64, range: f64) -> f64 {
    let a = v - lo;
    let b = a % range + range;
    let mut out = b % range + lo;
    if (out - lo).abs() < MIN_VISIT_BOUND {
        out += MIN_VISIT_BOUND;
    }
    out
}

struct Counted<'a> {
    f: &'a mut dyn FnMut(&[f64]) -> Result<f64>,
    evaluations: usize,
    limit: usize,
    best_x: Vec<f64>,
    best: f64,
}

impl Counted<'_> {
    fn exhausted(&self) -> bool {
        self.evaluations >= self.limit
    }

    fn eval(&mut self, x: &[f64]) -> Result<f64> {
        self.evaluations += 1;
        let v = (self.f)(x)?;
        let v = if v.is_nan() { f64::INFINITY } else { v };
        if v < self.best {
            self.best = v;
            self.best_x = x.to_vec();
        }
        Ok(v)
    }
}

/// Minimises `objective` over the box `[lower, upper]` within
/// `config.budget` evaluations. Starts from `x0` (clipped into the box) or a
/// uniform draw. Deterministic for a given seed.
pub fn anneal(
    objective: &mut dyn FnMut(&[f64]) -> Result<f64>,
    lower: &[f64],
    upper: &[f64],
    x0: Option<&[f64]>,
    config: &AnnealConfig,
    monitor: &dyn Monitor,
) -> Result<AnnealResult> {
    config.validate()?;
    let dim = lower.len();
    if dim == 0 || upper.len() != dim || lower.iter().zip(upper).any(|(l, u)| !(l < u)) {
        return Err(Error::validation(
            "annealing box needs lower < upper in every coordinate",
        ));
    }
    let range: Vec<f64> = lower.iter().zip(upper).map(|(l, u)| u - l).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let start: Vec<f64> = match x0 {
        Some(x) if x.len() == dim => x
            .iter()
            .zip(lower.iter().zip(upper))
            .map(|(v, (l, u))| v.clamp(*l, *u))
            .collect(),
        Some(_) => return Err(Error::validation("x0 has the wrong dimension")),
        None => lower
            .iter()
            .zip(&range)
            .map(|(l, r)| l + r * rng.random::<f64>())
            .collect(),
    };

    let refine_budget = ((config.budget as f64) * config.refine_fraction).floor() as usize;
    let mut f = Counted {
        f: objective,
        evaluations: 0,
        limit: config.budget - refine_budget,
        best_x: start.clone(),
        best: f64::INFINITY,
    };
    let initial_cost = f.eval(&start)?;
    f.best = initial_cost;
    f.best_x = start.clone();

    let visiting = Visiting::new(config.visiting_param);
    let qv = config.visiting_param;
    let qa = config.acceptance_param;
    let t0 = config.initial_temperature;
    let restart_t = t0 * config.restart_temperature_ratio;
    let t1 = ((qv - 1.0) * 2f64.ln()).exp() - 1.0;

    let mut current = start;
    let mut current_e = initial_cost;
    let mut not_improved = 0usize;
    let mut step = 0usize;
    'annealing: while !f.exhausted() {
        if monitor.is_cancelled() {
            return Err(Error::Cancelled);
        }
        let s = (step + 2) as f64;
        let t2 = ((qv - 1.0) * s.ln()).exp() - 1.0;
        let temperature = t0 * t1 / t2;
        if temperature < restart_t {
            current = lower
                .iter()
                .zip(&range)
                .map(|(l, r)| l + r * rng.random::<f64>())
                .collect();
            current_e = f.eval(&current)?;
            step = 0;
            continue;
        }
        let temperature_step = temperature / (step + 1) as f64;
        not_improved += 1;
        for j in 0..2 * dim {
            if f.exhausted() {
                break 'annealing;
            }
            let mut x = current.clone();
            if j < dim {
                for i in 0..dim {
                    x[i] = wrap(
                        current[i] + visiting.step(temperature, &mut rng),
                        lower[i],
                        range[i],
                    );
                }
            } else {
                let i = j - dim;
                x[i] = wrap(
                    current[i] + visiting.step(temperature, &mut rng),
                    lower[i],
                    range[i],
                );
            }
            let best_before = f.best;
            let e = f.eval(&x)?;
            if e < current_e {
                current = x;
                current_e = e;
                if e < best_before {
                    not_improved = 0;
                }
            } else {
                let r: f64 = rng.random();
                let pqv_temp = 1.0 - (1.0 - qa) * (e - current_e) / temperature_step;
                let pqv = if pqv_temp <= 0.0 {
                    0.0
                } else {
                    (pqv_temp.ln() / (1.0 - qa)).exp()
                };
                if r <= pqv {
                    current = x;
                    current_e = e;
                }
                if not_improved >= NOT_IMPROVED_MAX && (j == 0 || current_e > f.best) {
                    current = f.best_x.clone();
                    current_e = f.best;
                }
            }
        }
        step += 1;
        monitor.progress(f.evaluations as f64 / config.budget as f64, "annealing");
    }

    f.limit = config.budget;
    refine(&mut f, lower, upper, &range)?;
    Ok(AnnealResult {
        x: f.best_x.clone(),
        cost: f.best,
        evaluations: f.evaluations,
        initial_cost,
    })
}

/// Coordinate pattern search from the incumbent: try `x_i +- h` for every
/// coordinate, halving `h` after a sweep without improvement.
fn refine(f: &mut Counted<'_>, lower: &[f64], upper: &[f64], range: &[f64]) -> Result<()> {
    let mut h = 0.1;
    while h > 1e-5 && !f.exhausted() {
        let mut improved = false;
        for i in 0..lower.len() {
            for dir in [-1.0, 1.0] {
                if f.exhausted() {
                    return Ok(());
                }
                let mut x = f.best_x.clone();
                let v = (x[i] + dir * h * range[i]).clamp(lower[i], upper[i]);
                if v == x[i] {
                    continue;
                }
                x[i] = v;
                let before = f.best;
                if f.eval(&x)? < before {
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            h *= 0.5;
        }
    }
    Ok(())
}
