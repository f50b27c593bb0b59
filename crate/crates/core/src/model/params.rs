use serde::{Deserialize, Serialize};

use super::AGE_GROUPS;
use crate::error::{Error, Result};

/// Number of inferable scalar parameters in [`EpidemicParameters`].
pub const PARAMETER_COUNT: usize = 20;

/// Canonical parameter order used for vectors, priors and artifact files.
pub const PARAMETER_NAMES: [&str; PARAMETER_COUNT] = [
    "beta",
    "d_L",
    "d_C",
    "d_R",
    "d_RC",
    "d_D",
    "rho_1",
    "rho_2",
    "rho_3",
    "rho_4",
    "rho_5",
    "rho_prime_1",
    "rho_prime_2",
    "rho_prime_3",
    "rho_prime_4",
    "rho_prime_5",
    "N_in",
    "alpha_123",
    "alpha_4",
    "alpha_5",
];

/// Calibrated parameters of the SEI4RD dynamics.
///
/// Durations are in days; the corresponding rates are their reciprocals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpidemicParameters {
    /// Probability that a contact between `S` and `I^SC` transmits.
    pub beta: f64,
    /// Mean latent period (E -> I^SC).
    pub d_l: f64,
    /// Mean time from I^SC1 to clinical care.
    pub d_c: f64,
    /// Mean recovery time from I^SC2.
    pub d_r: f64,
    /// Mean recovery time from I^C2.
    pub d_rc: f64,
    /// Mean time to death from I^C1.
    pub d_d: f64,
    /// Probability of needing clinical care, per age group.
    pub rho: [f64; AGE_GROUPS],
    /// Probability of death once hospitalised, per age group.
    pub rho_prime: [f64; AGE_GROUPS],
    /// Number of infected individuals at the start of the dynamics.
    pub n_in: f64,
    pub alpha_123: f64,
    pub alpha_4: f64,
    pub alpha_5: f64,
}

impl EpidemicParameters {
    /// Posterior means for England calibrated on 1 March to 23 May 2020.
    pub fn england_may_posterior_mean() -> Self {
        Self {
            beta: 0.13,
            d_l: 1.57,
            d_c: 2.12,
            d_r: 1.54,
            d_rc: 12.08,
            d_d: 5.54,
            rho: [0.06, 0.05, 0.08, 0.54, 0.79],
            rho_prime: [0.26, 0.28, 0.33, 0.26, 0.80],
            n_in: 276.0,
            alpha_123: 0.63,
            alpha_4: 0.57,
            alpha_5: 0.71,
        }
    }

    pub fn kappa(&self) -> f64 {
        1.0 / self.d_l
    }

    pub fn gamma_c(&self) -> f64 {
        1.0 / self.d_c
    }

    pub fn gamma_r(&self) -> f64 {
        1.0 / self.d_r
    }

    pub fn gamma_rc(&self) -> f64 {
        1.0 / self.d_rc
    }

    pub fn nu(&self) -> f64 {
        1.0 / self.d_d
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.to_vector().iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::validation("parameters must be finite"));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::validation(format!(
                "beta = {} outside [0, 1]",
                self.beta
            )));
        }
        for (name, d) in [
            ("d_L", self.d_l),
            ("d_C", self.d_c),
            ("d_R", self.d_r),
            ("d_RC", self.d_rc),
            ("d_D", self.d_d),
        ] {
            if d <= 0.0 {
                return Err(Error::validation(format!("{name} = {d} must be > 0")));
            }
        }
        for i in 0..AGE_GROUPS {
            if !(0.0..=1.0).contains(&self.rho[i]) {
                return Err(Error::validation(format!(
                    "rho_{} = {} outside [0, 1]",
                    i + 1,
                    self.rho[i]
                )));
            }
            if !(0.0..=1.0).contains(&self.rho_prime[i]) {
                return Err(Error::validation(format!(
                    "rho_prime_{} = {} outside [0, 1]",
                    i + 1,
                    self.rho_prime[i]
                )));
            }
        }
        if self.n_in < 0.0 {
            return Err(Error::validation(format!("N_in = {} < 0", self.n_in)));
        }
        for (name, a) in [
            ("alpha_123", self.alpha_123),
            ("alpha_4", self.alpha_4),
            ("alpha_5", self.alpha_5),
        ] {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::validation(format!("{name} = {a} outside [0, 1]")));
            }
        }
        Ok(())
    }

    /// Flattens into the canonical order of [`PARAMETER_NAMES`].
    pub fn to_vector(&self) -> [f64; PARAMETER_COUNT] {
        let mut v = [0.0; PARAMETER_COUNT];
        v[0] = self.beta;
        v[1] = self.d_l;
        v[2] = self.d_c;
        v[3] = self.d_r;
        v[4] = self.d_rc;
        v[5] = self.d_d;
        v[6..11].copy_from_slice(&self.rho);
        v[11..16].copy_from_slice(&self.rho_prime);
        v[16] = self.n_in;
        v[17] = self.alpha_123;
        v[18] = self.alpha_4;
        v[19] = self.alpha_5;
        v
    }

    pub fn from_vector(v: &[f64]) -> Result<Self> {
        if v.len() != PARAMETER_COUNT {
            return Err(Error::structural(format!(
                "parameter vector has {} entries, expected {PARAMETER_COUNT}",
                v.len()
            )));
        }
        let mut rho = [0.0; AGE_GROUPS];
        let mut rho_prime = [0.0; AGE_GROUPS];
        rho.copy_from_slice(&v[6..11]);
        rho_prime.copy_from_slice(&v[11..16]);
        Ok(Self {
            beta: v[0],
            d_l: v[1],
            d_c: v[2],
            d_r: v[3],
            d_rc: v[4],
            d_d: v[5],
            rho,
            rho_prime,
            n_in: v[16],
            alpha_123: v[17],
            alpha_4: v[18],
            alpha_5: v[19],
        })
    }

    pub fn index_of(name: &str) -> Option<usize> {
        PARAMETER_NAMES.iter().position(|n| *n == name)
    }
}
