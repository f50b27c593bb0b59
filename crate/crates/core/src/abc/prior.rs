use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{EpidemicParameters, PARAMETER_COUNT, PARAMETER_NAMES};

/// Marginal prior of one parameter. Every family has a bounded support
/// `[low, high]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PriorFamily {
    Uniform {
        low: f64,
        high: f64,
    },
    LogUniform {
        low: f64,
        high: f64,
    },
    TruncatedNormal {
        mean: f64,
        std: f64,
        low: f64,
        high: f64,
    },
}

impl PriorFamily {
    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            PriorFamily::Uniform { low, high }
            | PriorFamily::LogUniform { low, high }
            | PriorFamily::TruncatedNormal { low, high, .. } => (low, high),
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        let (lo, hi) = self.bounds();
        x >= lo && x <= hi
    }

    fn validate(&self, name: &str) -> Result<()> {
        let (lo, hi) = self.bounds();
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::validation(format!(
                "prior for {name}: need finite low < high, got [{lo}, {hi}]"
            )));
        }
        match *self {
            PriorFamily::LogUniform { low, .. } if low <= 0.0 => Err(Error::validation(format!(
                "prior for {name}: log-uniform needs low > 0"
            ))),
            PriorFamily::TruncatedNormal { mean, std, .. } if !(std > 0.0 && mean.is_finite()) => {
                Err(Error::validation(format!(
                    "prior for {name}: truncated-normal needs finite mean and std > 0"
                )))
            }
            _ => Ok(()),
        }
    }

    /// Log-density up to a family-specific constant; `-inf` off support.
    /// Constants cancel once importance weights are normalised.
    pub fn log_density(&self, x: f64) -> f64 {
        if !self.contains(x) {
            return f64::NEG_INFINITY;
        }
        match *self {
            PriorFamily::Uniform { low, high } => -(high - low).ln(),
            PriorFamily::LogUniform { low, high } => -x.ln() - (high / low).ln().ln(),
            PriorFamily::TruncatedNormal { mean, std, .. } => {
                let z = (x - mean) / std;
                -0.5 * z * z - std.ln()
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            PriorFamily::Uniform { low, high } => rng.random_range(low..=high),
            PriorFamily::LogUniform { low, high } => rng
                .random_range(low.ln()..=high.ln())
                .exp()
                .clamp(low, high),
            PriorFamily::TruncatedNormal {
                mean,
                std,
                low,
                high,
            } => {
                mean + std * truncated_standard_normal(rng, (low - mean) / std, (high - mean) / std)
            }
        }
    }
}

/// Draws from N(0, 1) restricted to `[a, b]`. Uses plain rejection when the
/// interval straddles the bulk and an exponential tail proposal otherwise.
fn truncated_standard_normal<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> f64 {
    if a > 0.0 {
        return tail_sample(rng, a, b);
    }
    if b < 0.0 {
        return -tail_sample(rng, -b, -a);
    }
    if b - a < 2.5 {
        loop {
            let z = rng.random_range(a..=b);
            if rng.random::<f64>() <= (-0.5 * z * z).exp() {
                return z;
            }
        }
    }
    loop {
        let z: f64 = StandardNormal.sample(rng);
        if z >= a && z <= b {
            return z;
        }
    }
}

fn tail_sample<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> f64 {
    let lambda = 0.5 * (a + (a * a + 4.0).sqrt());
    let exp = Exp::new(lambda).expect("positive rate");
    loop {
        let z = a + exp.sample(rng);
        if z > b {
            continue;
        }
        if rng.random::<f64>() <= (-0.5 * (z - lambda).powi(2)).exp() {
            return z;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterPrior {
    pub name: String,
    #[serde(flatten)]
    pub family: PriorFamily,
}

/// Independent priors for every model parameter, stored in canonical
/// parameter order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PriorList", into = "PriorList")]
pub struct PriorSpecification {
    families: [PriorFamily; PARAMETER_COUNT],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PriorList {
    parameters: Vec<ParameterPrior>,
}

impl TryFrom<PriorList> for PriorSpecification {
    type Error = Error;

    fn try_from(list: PriorList) -> Result<Self> {
        Self::from_list(list.parameters)
    }
}

impl From<PriorSpecification> for PriorList {
    fn from(spec: PriorSpecification) -> Self {
        PriorList {
            parameters: spec.to_list(),
        }
    }
}

impl Default for PriorSpecification {
    fn default() -> Self {
        let u = |low, high| PriorFamily::Uniform { low, high };
        let mut families = [u(0.0, 1.0); PARAMETER_COUNT];
        families[0] = u(0.01, 0.5);
        for f in &mut families[1..4] {
            *f = u(1.0, 16.0);
        }
        families[4] = u(1.0, 20.0);
        families[5] = u(1.0, 20.0);
        families[16] = u(50.0, 600.0);
        Self { families }
    }
}

impl PriorSpecification {
    /// Builds from named entries; each parameter must appear exactly once.
    pub fn from_list(entries: Vec<ParameterPrior>) -> Result<Self> {
        let mut slots: [Option<PriorFamily>; PARAMETER_COUNT] = [None; PARAMETER_COUNT];
        for entry in entries {
            let idx = EpidemicParameters::index_of(&entry.name).ok_or_else(|| {
                Error::validation(format!("prior names unknown parameter {:?}", entry.name))
            })?;
            if slots[idx].is_some() {
                return Err(Error::validation(format!(
                    "prior for {} given more than once",
                    entry.name
                )));
            }
            slots[idx] = Some(entry.family);
        }
        let missing: Vec<&str> = slots
            .iter()
            .zip(PARAMETER_NAMES)
            .filter(|(s, _)| s.is_none())
            .map(|(_, n)| n)
            .collect();
        if !missing.is_empty() {
            return Err(Error::validation(format!(
                "prior missing parameters: {}",
                missing.join(", ")
            )));
        }
        let families = slots.map(|s| s.expect("checked above"));
        let spec = Self { families };
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_list(&self) -> Vec<ParameterPrior> {
        PARAMETER_NAMES
            .iter()
            .zip(self.families)
            .map(|(n, family)| ParameterPrior {
                name: (*n).to_string(),
                family,
            })
            .collect()
    }

    pub fn family(&self, index: usize) -> &PriorFamily {
        &self.families[index]
    }

    /// Replaces one marginal; the result is revalidated.
    pub fn with(mut self, name: &str, family: PriorFamily) -> Result<Self> {
        let idx = EpidemicParameters::index_of(name)
            .ok_or_else(|| Error::validation(format!("unknown parameter {name:?}")))?;
        self.families[idx] = family;
        self.validate()?;
        Ok(self)
    }

    /// Bounds must be well formed and lie inside the admissible parameter
    /// ranges.
    pub fn validate(&self) -> Result<()> {
        for (idx, (f, name)) in self.families.iter().zip(PARAMETER_NAMES).enumerate() {
            f.validate(name)?;
            let (lo, hi) = f.bounds();
            let ok = match idx {
                1..=5 => lo > 0.0,
                16 => lo >= 0.0,
                _ => lo >= 0.0 && hi <= 1.0,
            };
            if !ok {
                return Err(Error::validation(format!(
                    "prior for {name}: support [{lo}, {hi}] leaves the admissible range"
                )));
            }
        }
        Ok(())
    }

    pub fn in_support(&self, x: &[f64]) -> bool {
        x.len() == PARAMETER_COUNT && self.families.iter().zip(x).all(|(f, v)| f.contains(*v))
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        if x.len() != PARAMETER_COUNT {
            return f64::NEG_INFINITY;
        }
        self.families
            .iter()
            .zip(x)
            .map(|(f, v)| f.log_density(*v))
            .sum()
    }

    pub fn sample_vector<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; PARAMETER_COUNT] {
        self.families.map(|f| f.sample(rng))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> EpidemicParameters {
        EpidemicParameters::from_vector(&self.sample_vector(rng)).expect("fixed length")
    }
}
