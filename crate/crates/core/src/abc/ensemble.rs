use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DistanceWeights, PriorSpecification};
use crate::error::{Error, Result};
use crate::model::{EpidemicParameters, PARAMETER_COUNT, PARAMETER_NAMES};

pub const ENSEMBLE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub parameters: EpidemicParameters,
    pub weight: f64,
    pub distance: f64,
}

/// What happened in one generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationSummary {
    pub generation: usize,
    pub tolerance: f64,
    pub accepted: usize,
    pub attempts: usize,
    pub acceptance_rate: f64,
    pub effective_sample_size: f64,
    /// Weighted posterior means in canonical parameter order.
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleStatus {
    Complete,
    /// Acceptance fell below the floor; the ensemble is smaller or older
    /// than requested.
    Partial,
}

/// Weighted particle approximation of the posterior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorEnsemble {
    pub schema_version: u32,
    pub parameter_names: Vec<String>,
    pub prior: PriorSpecification,
    pub distance_weights: DistanceWeights,
    pub seed: u64,
    /// Last observed day of the data the ensemble was fitted to.
    pub observation_horizon: usize,
    /// Index of the generation the particles belong to.
    pub generation: usize,
    pub tolerance: f64,
    pub status: EnsembleStatus,
    pub warnings: Vec<String>,
    pub history: Vec<GenerationSummary>,
    pub particles: Vec<Particle>,
}

impl PosteriorEnsemble {
    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.particles.iter().map(|p| p.weight).collect()
    }

    pub fn vectors(&self) -> Vec<[f64; PARAMETER_COUNT]> {
        self.particles
            .iter()
            .map(|p| p.parameters.to_vector())
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != ENSEMBLE_SCHEMA_VERSION {
            return Err(Error::validation(format!(
                "unsupported ensemble schema version {}",
                self.schema_version
            )));
        }
        if self.particles.is_empty() {
            return Err(Error::validation("ensemble has no particles"));
        }
        let mut total = 0.0;
        for (k, p) in self.particles.iter().enumerate() {
            if !(p.weight.is_finite() && p.weight >= 0.0) {
                return Err(Error::validation(format!(
                    "particle {k} has invalid weight"
                )));
            }
            if !self.prior.in_support(&p.parameters.to_vector()) {
                return Err(Error::validation(format!(
                    "particle {k} lies outside the prior support"
                )));
            }
            total += p.weight;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::validation(format!(
                "ensemble weights sum to {total}, expected 1"
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let e: Self = serde_json::from_str(text)?;
        e.validate()?;
        Ok(e)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// `n` draws with replacement, each particle chosen with probability
/// proportional to its weight.
pub fn bootstrap_resample(
    ensemble: &PosteriorEnsemble,
    n: usize,
    seed: u64,
) -> Result<Vec<EpidemicParameters>> {
    if ensemble.is_empty() {
        return Err(Error::validation("cannot resample an empty ensemble"));
    }
    let index = WeightedIndex::new(ensemble.weights())
        .map_err(|e| Error::validation(format!("ensemble weights: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| ensemble.particles[index.sample(&mut rng)].parameters)
        .collect())
}

/// Weighted moments of the ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub names: Vec<String>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
}

impl PosteriorSummary {
    pub fn get(&self, name: &str) -> Option<(f64, f64)> {
        let i = self.names.iter().position(|n| n == name)?;
        Some((self.mean[i], self.std[i]))
    }

    pub fn correlation(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.names.iter().position(|n| n == a)?;
        let j = self.names.iter().position(|n| n == b)?;
        let denom = self.std[i] * self.std[j];
        (denom > 0.0).then(|| self.covariance[i][j] / denom)
    }

    /// Plain-text table, one parameter per row.
    pub fn table(&self) -> String {
        let mut out = format!("{:<12} {:>14} {:>14}\n", "parameter", "mean", "std");
        for ((n, m), s) in self.names.iter().zip(&self.mean).zip(&self.std) {
            out.push_str(&format!("{n:<12} {m:>14.6} {s:>14.6}\n"));
        }
        out
    }
}

/// Weighted mean and (population) covariance of row vectors.
pub(crate) fn weighted_moments(
    xs: &[[f64; PARAMETER_COUNT]],
    w: &[f64],
) -> (Vec<f64>, Vec<Vec<f64>>) {
    let total: f64 = w.iter().sum();
    let mut mean = vec![0.0; PARAMETER_COUNT];
    for (x, wk) in xs.iter().zip(w) {
        for (m, v) in mean.iter_mut().zip(x) {
            *m += wk * v / total;
        }
    }
    let mut cov = vec![vec![0.0; PARAMETER_COUNT]; PARAMETER_COUNT];
    for (x, wk) in xs.iter().zip(w) {
        for i in 0..PARAMETER_COUNT {
            let di = x[i] - mean[i];
            for j in 0..=i {
                cov[i][j] += wk * di * (x[j] - mean[j]) / total;
            }
        }
    }
    for i in 0..PARAMETER_COUNT {
        for j in 0..i {
            cov[j][i] = cov[i][j];
        }
    }
    (mean, cov)
}

pub fn posterior_summary(ensemble: &PosteriorEnsemble) -> Result<PosteriorSummary> {
    if ensemble.is_empty() {
        return Err(Error::validation("empty ensemble"));
    }
    let (mean, covariance) = weighted_moments(&ensemble.vectors(), &ensemble.weights());
    let std = (0..PARAMETER_COUNT)
        .map(|i| covariance[i][i].max(0.0).sqrt())
        .collect();
    Ok(PosteriorSummary {
        names: PARAMETER_NAMES.iter().map(|s| s.to_string()).collect(),
        mean,
        std,
        covariance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn ensemble_of(betas: &[(f64, f64)]) -> PosteriorEnsemble {
        let base = EpidemicParameters::england_may_posterior_mean();
        PosteriorEnsemble {
            schema_version: ENSEMBLE_SCHEMA_VERSION,
            parameter_names: PARAMETER_NAMES.iter().map(|s| s.to_string()).collect(),
            prior: PriorSpecification::default(),
            distance_weights: DistanceWeights::default(),
            seed: 0,
            observation_horizon: 30,
            generation: 0,
            tolerance: 1.0,
            status: EnsembleStatus::Complete,
            warnings: vec![],
            history: vec![],
            particles: betas
                .iter()
                .map(|&(beta, weight)| Particle {
                    parameters: EpidemicParameters { beta, ..base },
                    weight,
                    distance: 0.0,
                })
                .collect(),
        }
    }

    #[test]
    fn two_point_moments() {
        let e = ensemble_of(&[(0.1, 0.5), (0.3, 0.5)]);
        let s = posterior_summary(&e).unwrap();
        let (m, sd) = s.get("beta").unwrap();
        assert!((m - 0.2).abs() < 1e-12);
        assert!((sd - 0.1).abs() < 1e-12);
        assert_eq!(s.get("d_L").unwrap().1, 0.0);
    }

    #[test]
    fn identical_particles_have_zero_std() {
        let e = ensemble_of(&[(0.2, 0.25); 4]);
        let s = posterior_summary(&e).unwrap();
        assert!(s.std.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn resampling() {
        let one = ensemble_of(&[(0.17, 1.0)]);
        assert!(bootstrap_resample(&one, 50, 1)
            .unwrap()
            .iter()
            .all(|p| p.beta == 0.17));

        let zero = ensemble_of(&[(0.1, 0.0), (0.2, 1.0)]);
        assert!(bootstrap_resample(&zero, 500, 2)
            .unwrap()
            .iter()
            .all(|p| p.beta == 0.2));

        let n = 10_000;
        let two = ensemble_of(&[(0.1, 0.5), (0.3, 0.5)]);
        let draws = bootstrap_resample(&two, n, 3).unwrap();
        let k = draws.iter().filter(|p| p.beta == 0.1).count() as f64;
        let sigma = (n as f64 * 0.25).sqrt();
        assert!((k - n as f64 / 2.0).abs() < 3.0 * sigma, "{k}");
    }

    #[test]
    fn json_round_trip() {
        let e = ensemble_of(&[(0.1, 0.25), (0.3, 0.75)]);
        let back = PosteriorEnsemble::from_json(&e.to_json().unwrap()).unwrap();
        assert_eq!(e, back);
        let mut bad = e.clone();
        bad.particles[0].weight = 0.9;
        assert!(PosteriorEnsemble::from_json(&bad.to_json().unwrap()).is_err());
    }
}
