use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ensemble::weighted_moments;
use super::{
    distance, DistanceWeights, EnsembleStatus, GenerationSummary, ModelRunner, Particle,
    PosteriorEnsemble, PriorSpecification, ENSEMBLE_SCHEMA_VERSION,
};
use crate::error::{Error, Result};
use crate::mobility::ObservationSet;
use crate::model::{EpidemicParameters, PARAMETER_COUNT, PARAMETER_NAMES};
use crate::monitor::Monitor;
use crate::rng::stream_rng;

type Theta = [f64; PARAMETER_COUNT];

/// Stream used for the prior-predictive pilot that sets the first tolerance.
const PILOT_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AbcConfig {
    pub generations: usize,
    pub particles: usize,
    /// Quantile of the previous distances used as the next tolerance.
    pub quantile: f64,
    pub seed: u64,
    pub distance_weights: DistanceWeights,
    /// A generation stops once its acceptance rate is provably below this.
    pub acceptance_floor: f64,
    /// Hard cap on candidates per generation.
    pub max_attempts: usize,
    /// Re-draws allowed for a kernel proposal outside the prior support.
    pub kernel_retries: usize,
    /// Kernel covariance as a multiple of the weighted particle covariance.
    pub kernel_scale: f64,
    /// Candidates simulated per parallel batch. Affects speed only.
    pub batch_size: usize,
}

impl Default for AbcConfig {
    fn default() -> Self {
        Self {
            generations: 3,
            particles: 100,
            quantile: 0.5,
            seed: 0,
            distance_weights: DistanceWeights::default(),
            acceptance_floor: 1e-5,
            max_attempts: 2_000_000,
            kernel_retries: 100,
            kernel_scale: 2.0,
            batch_size: 256,
        }
    }
}

impl AbcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.generations < 1 {
            return Err(Error::validation("generations must be >= 1"));
        }
        if self.particles < 2 {
            return Err(Error::validation("particles must be >= 2"));
        }
        if !(self.quantile > 0.0 && self.quantile < 1.0) {
            return Err(Error::validation("quantile must lie in (0, 1)"));
        }
        if !(self.acceptance_floor > 0.0 && self.acceptance_floor < 1.0) {
            return Err(Error::validation("acceptance_floor must lie in (0, 1)"));
        }
        if !(self.kernel_scale > 0.0 && self.kernel_scale.is_finite()) {
            return Err(Error::validation("kernel_scale must be > 0"));
        }
        if self.batch_size == 0 || self.max_attempts == 0 {
            return Err(Error::validation("batch_size and max_attempts must be > 0"));
        }
        self.distance_weights.validate()
    }
}

/// Linear-interpolation quantile of the finite entries of `values`.
pub fn quantile(values: &[f64], q: f64) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(v[lo] + (pos - lo as f64) * (v[hi] - v[lo]))
}

struct Candidate {
    theta: Option<Theta>,
    distance: f64,
    failure: Option<String>,
}

struct Collected {
    accepted: Vec<(Theta, f64)>,
    attempts: usize,
    partial: bool,
    first_failure: Option<String>,
}

fn evaluate<R: ModelRunner + ?Sized>(
    runner: &R,
    obs: &ObservationSet,
    weights: &DistanceWeights,
    theta: Option<Theta>,
) -> Candidate {
    let Some(theta) = theta else {
        return Candidate {
            theta: None,
            distance: f64::INFINITY,
            failure: None,
        };
    };
    let run = EpidemicParameters::from_vector(&theta)
        .and_then(|p| runner.run(&p, obs.horizon()))
        .and_then(|sim| distance(&sim, obs, weights));
    match run {
        Ok(d) if d.is_finite() => Candidate {
            theta: Some(theta),
            distance: d,
            failure: None,
        },
        Ok(d) => Candidate {
            theta: Some(theta),
            distance: d,
            failure: Some("non-finite distance".into()),
        },
        Err(e) => Candidate {
            theta: Some(theta),
            distance: f64::INFINITY,
            failure: Some(e.to_string()),
        },
    }
}

/// Simulates candidates in parallel batches and accepts them strictly in
/// index order, so the outcome never depends on thread count.
fn collect<F>(
    n_target: usize,
    gamma: f64,
    config: &AbcConfig,
    monitor: &dyn Monitor,
    progress: (f64, f64),
    generation: usize,
    propose: F,
) -> Result<Collected>
where
    F: Fn(u64) -> Candidate + Sync,
{
    let floor_attempts = (1.0 / config.acceptance_floor).ceil() as usize;
    let mut out = Collected {
        accepted: Vec::with_capacity(n_target),
        attempts: 0,
        partial: false,
        first_failure: None,
    };
    let mut next = 0u64;
    'outer: while out.accepted.len() < n_target {
        if monitor.is_cancelled() {
            return Err(Error::Cancelled);
        }
        let batch: Vec<Candidate> = (next..next + config.batch_size as u64)
            .into_par_iter()
            .map(&propose)
            .collect();
        next += config.batch_size as u64;
        for c in batch {
            out.attempts += 1;
            if out.first_failure.is_none() {
                out.first_failure = c.failure;
            }
            if let Some(theta) = c.theta {
                if c.distance < gamma {
                    out.accepted.push((theta, c.distance));
                    if out.accepted.len() == n_target {
                        break 'outer;
                    }
                }
            }
            let below_floor = out.attempts >= floor_attempts
                && (out.accepted.len() as f64) < config.acceptance_floor * out.attempts as f64;
            if below_floor || out.attempts >= config.max_attempts {
                out.partial = true;
                break 'outer;
            }
        }
        let frac = out.accepted.len() as f64 / n_target as f64;
        monitor.progress(
            progress.0 + (progress.1 - progress.0) * frac,
            &format!(
                "generation {generation}: {}/{n_target} particles after {} candidates",
                out.accepted.len(),
                out.attempts
            ),
        );
    }
    Ok(out)
}

fn summarize(
    generation: usize,
    tolerance: f64,
    particles: &[Particle],
    attempts: usize,
) -> GenerationSummary {
    let xs: Vec<Theta> = particles.iter().map(|p| p.parameters.to_vector()).collect();
    let w: Vec<f64> = particles.iter().map(|p| p.weight).collect();
    let (mean, cov) = if xs.is_empty() {
        (
            vec![f64::NAN; PARAMETER_COUNT],
            vec![vec![f64::NAN; PARAMETER_COUNT]; PARAMETER_COUNT],
        )
    } else {
        weighted_moments(&xs, &w)
    };
    GenerationSummary {
        generation,
        tolerance,
        accepted: particles.len(),
        attempts,
        acceptance_rate: if attempts == 0 {
            0.0
        } else {
            particles.len() as f64 / attempts as f64
        },
        effective_sample_size: 1.0 / w.iter().map(|x| x * x).sum::<f64>(),
        mean,
        std: (0..PARAMETER_COUNT)
            .map(|i| cov[i][i].max(0.0).sqrt())
            .collect(),
    }
}

fn to_particles(accepted: &[(Theta, f64)], weights: &[f64]) -> Vec<Particle> {
    accepted
        .iter()
        .zip(weights)
        .map(|((theta, d), w)| Particle {
            parameters: EpidemicParameters::from_vector(theta).expect("fixed length"),
            weight: *w,
            distance: *d,
        })
        .collect()
}

fn empty_ensemble(
    prior: &PriorSpecification,
    config: &AbcConfig,
    horizon: usize,
) -> PosteriorEnsemble {
    PosteriorEnsemble {
        schema_version: ENSEMBLE_SCHEMA_VERSION,
        parameter_names: PARAMETER_NAMES.iter().map(|s| s.to_string()).collect(),
        prior: prior.clone(),
        distance_weights: config.distance_weights,
        seed: config.seed,
        observation_horizon: horizon,
        generation: 0,
        tolerance: f64::INFINITY,
        status: EnsembleStatus::Complete,
        warnings: Vec::new(),
        history: Vec::new(),
        particles: Vec::new(),
    }
}

fn floor_warning(generation: usize, c: &Collected, n_target: usize) -> String {
    let mut msg = format!(
        "generation {generation}: accepted {} of {n_target} after {} attempts (rate {:.3e})",
        c.accepted.len(),
        c.attempts,
        c.accepted.len() as f64 / c.attempts.max(1) as f64
    );
    if let Some(f) = &c.first_failure {
        msg.push_str(&format!("; first simulation failure: {f}"));
    }
    msg
}

fn rejection_generation<R: ModelRunner + ?Sized>(
    runner: &R,
    obs: &ObservationSet,
    prior: &PriorSpecification,
    gamma: f64,
    config: &AbcConfig,
    monitor: &dyn Monitor,
    progress: (f64, f64),
) -> Result<Collected> {
    collect(config.particles, gamma, config, monitor, progress, 0, |i| {
        let mut rng = stream_rng(config.seed, 0, i);
        evaluate(
            runner,
            obs,
            &config.distance_weights,
            Some(prior.sample_vector(&mut rng)),
        )
    })
}

/// Plain rejection ABC: prior draws are kept while their distance is below
/// `gamma`, until `config.particles` are accepted or the acceptance floor is
/// hit. Weights are uniform.
pub fn abc_rejection<R: ModelRunner + ?Sized>(
    runner: &R,
    obs: &ObservationSet,
    prior: &PriorSpecification,
    gamma: f64,
    config: &AbcConfig,
    monitor: &dyn Monitor,
) -> Result<PosteriorEnsemble> {
    config.validate()?;
    prior.validate()?;
    obs.validate()?;
    if gamma.is_nan() || gamma < 0.0 {
        return Err(Error::validation("tolerance must be >= 0"));
    }
    let c = rejection_generation(runner, obs, prior, gamma, config, monitor, (0.0, 1.0))?;
    Ok(finish_rejection(prior, config, obs.horizon(), gamma, c))
}

fn finish_rejection(
    prior: &PriorSpecification,
    config: &AbcConfig,
    horizon: usize,
    gamma: f64,
    c: Collected,
) -> PosteriorEnsemble {
    let mut e = empty_ensemble(prior, config, horizon);
    e.tolerance = gamma;
    let n = c.accepted.len();
    let w = vec![1.0 / n.max(1) as f64; n];
    e.particles = to_particles(&c.accepted, &w);
    e.history
        .push(summarize(0, gamma, &e.particles, c.attempts));
    if c.partial {
        e.status = EnsembleStatus::Partial;
        let msg = floor_warning(0, &c, config.particles);
        log::warn!("{msg}");
        e.warnings.push(msg);
    }
    e
}

/// Gaussian perturbation kernel with a fixed covariance.
struct Kernel {
    chol_l: DMatrix<f64>,
}

impl Kernel {
    fn new(cov: &[Vec<f64>], scale: f64) -> Self {
        let d = PARAMETER_COUNT;
        let base = DMatrix::from_fn(d, d, |i, j| scale * cov[i][j]);
        let mean_diag = (0..d).map(|i| base[(i, i)]).sum::<f64>() / d as f64;
        let mut jitter = 0.0;
        for attempt in 0..20 {
            let mut m = base.clone();
            for i in 0..d {
                m[(i, i)] += jitter;
            }
            if let Some(ch) = m.cholesky() {
                return Self { chol_l: ch.l() };
            }
            jitter = mean_diag.max(1e-300) * 1e-12 * 10f64.powi(attempt);
        }
        // degenerate ensemble: fall back to independent coordinates
        let diag = DMatrix::from_fn(d, d, |i, j| {
            if i == j {
                base[(i, i)].max(1e-12).sqrt()
            } else {
                0.0
            }
        });
        Self { chol_l: diag }
    }

    fn perturb<R: rand::Rng>(&self, centre: &Theta, rng: &mut R) -> Theta {
        let z = DVector::from_fn(PARAMETER_COUNT, |_, _| StandardNormal.sample(rng));
        let step = &self.chol_l * z;
        let mut out = *centre;
        for (o, s) in out.iter_mut().zip(step.iter()) {
            *o += s;
        }
        out
    }

    /// `-0.5 * |L^{-1}(x - c)|^2`; the normalising constant is shared by all
    /// centres and cancels.
    fn log_density(&self, x: &Theta, centre: &Theta) -> f64 {
        let d = DVector::from_fn(PARAMETER_COUNT, |i, _| x[i] - centre[i]);
        match self.chol_l.solve_lower_triangular(&d) {
            Some(y) => -0.5 * y.norm_squared(),
            None => f64::NEG_INFINITY,
        }
    }
}

fn log_sum_exp(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn normalize_log_weights(lw: &[f64]) -> Vec<f64> {
    let m = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = lw
        .iter()
        .map(|x| if m.is_finite() { (x - m).exp() } else { 1.0 })
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

/// Population Monte Carlo ABC. Generation 0 is rejection ABC at the
/// `quantile` of `particles` prior-predictive distances; each later
/// generation perturbs weighted resamples of the previous one and accepts
/// below the `quantile` of the previous accepted distances.
pub fn pmc_abc<R: ModelRunner + ?Sized>(
    runner: &R,
    obs: &ObservationSet,
    prior: &PriorSpecification,
    config: &AbcConfig,
    monitor: &dyn Monitor,
) -> Result<PosteriorEnsemble> {
    config.validate()?;
    prior.validate()?;
    obs.validate()?;
    let n = config.particles;
    let gens = config.generations as f64;
    let span = |g: usize| (g as f64 / gens, (g + 1) as f64 / gens);

    let pilot: Vec<Candidate> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(config.seed, PILOT_STREAM, i);
            evaluate(
                runner,
                obs,
                &config.distance_weights,
                Some(prior.sample_vector(&mut rng)),
            )
        })
        .collect();
    let distances: Vec<f64> = pilot.iter().map(|c| c.distance).collect();
    let gamma0 = quantile(&distances, config.quantile).ok_or_else(|| {
        let why = pilot
            .iter()
            .find_map(|c| c.failure.clone())
            .unwrap_or_else(|| "no finite distance".into());
        Error::validation(format!("every prior-predictive simulation failed: {why}"))
    })?;
    if monitor.is_cancelled() {
        return Err(Error::Cancelled);
    }

    let c = rejection_generation(runner, obs, prior, gamma0, config, monitor, span(0))?;
    let mut ensemble = finish_rejection(prior, config, obs.horizon(), gamma0, c);
    if ensemble.status == EnsembleStatus::Partial || ensemble.len() < 2 {
        return Ok(ensemble);
    }

    for g in 1..config.generations {
        if monitor.is_cancelled() {
            return Err(Error::Cancelled);
        }
        let prev_theta = ensemble.vectors();
        let prev_w = ensemble.weights();
        let prev_d: Vec<f64> = ensemble.particles.iter().map(|p| p.distance).collect();
        let gamma = quantile(&prev_d, config.quantile).expect("non-empty ensemble");
        if gamma <= 0.0 {
            let msg = format!("generation {g}: tolerance reached 0; stopping");
            log::warn!("{msg}");
            ensemble.warnings.push(msg);
            break;
        }
        let (_, cov) = weighted_moments(&prev_theta, &prev_w);
        let kernel = Kernel::new(&cov, config.kernel_scale);
        let picker = WeightedIndex::new(&prev_w).map_err(|e| Error::Numeric {
            message: format!("degenerate particle weights: {e}"),
            residual: f64::NAN,
        })?;

        let c = collect(n, gamma, config, monitor, span(g), g, |i| {
            let mut rng = stream_rng(config.seed, g as u64, i);
            let centre = &prev_theta[picker.sample(&mut rng)];
            let proposal = (0..=config.kernel_retries)
                .map(|_| kernel.perturb(centre, &mut rng))
                .find(|x| prior.in_support(x));
            evaluate(runner, obs, &config.distance_weights, proposal)
        })?;

        if c.partial {
            let msg = format!("{}; keeping generation {}", floor_warning(g, &c, n), g - 1);
            log::warn!("{msg}");
            ensemble.warnings.push(msg);
            ensemble.status = EnsembleStatus::Partial;
            break;
        }

        let log_prev_w: Vec<f64> = prev_w.iter().map(|w| w.ln()).collect();
        let log_w: Vec<f64> = c
            .accepted
            .par_iter()
            .map(|(x, _)| {
                let denom = log_sum_exp(
                    prev_theta
                        .iter()
                        .zip(&log_prev_w)
                        .map(|(centre, lw)| lw + kernel.log_density(x, centre)),
                );
                prior.log_density(x) - denom
            })
            .collect();
        let weights = normalize_log_weights(&log_w);
        ensemble.particles = to_particles(&c.accepted, &weights);
        ensemble.generation = g;
        ensemble.tolerance = gamma;
        ensemble
            .history
            .push(summarize(g, gamma, &ensemble.particles, c.attempts));
        log::info!(
            "generation {g}: tolerance {gamma:.6e}, {} attempts",
            c.attempts
        );
    }
    monitor.progress(1.0, "calibrated");
    Ok(ensemble)
}
