//! Python bindings: simulate a dataset, compute R, run a calibration.

use std::collections::BTreeMap;
use std::path::PathBuf;

use epicontrol::abc::{
    pmc_abc, posterior_summary, AbcConfig, PosteriorEnsemble, PriorSpecification,
};
use epicontrol::control::{historical_bands, BandRow};
use epicontrol::dataset::Dataset as CoreDataset;
use epicontrol::model::{EpidemicParameters, PARAMETER_NAMES};
use epicontrol::monitor::Silent;
use epicontrol::Error;
use nalgebra::DMatrix;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    if e.is_validation() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn parameters(v: Option<Vec<Vec<f64>>>) -> PyResult<Vec<EpidemicParameters>> {
    match v {
        None => Ok(vec![EpidemicParameters::england_may_posterior_mean()]),
        Some(rows) => rows
            .iter()
            .map(|r| EpidemicParameters::from_vector(r).map_err(to_py))
            .collect(),
    }
}

/// Names of the model parameters, in vector order.
#[pyfunction]
fn parameter_names() -> Vec<&'static str> {
    PARAMETER_NAMES.to_vec()
}

/// Posterior-mean parameter vector bundled for England.
#[pyfunction]
fn posterior_mean() -> Vec<f64> {
    EpidemicParameters::england_may_posterior_mean()
        .to_vector()
        .to_vec()
}

/// Spectral radius of a square matrix.
#[pyfunction]
fn spectral_radius(matrix: Vec<Vec<f64>>) -> PyResult<f64> {
    let n = matrix.len();
    if matrix.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err("matrix must be square"));
    }
    let m = DMatrix::from_fn(n, n, |i, j| matrix[i][j]);
    epicontrol::repro::spectral_radius(&m).map_err(to_py)
}

/// Mean and standard deviation of every parameter in an ensemble JSON.
#[pyfunction]
fn ensemble_summary(ensemble_json: &str) -> PyResult<BTreeMap<String, (f64, f64)>> {
    let ensemble = PosteriorEnsemble::from_json(ensemble_json).map_err(to_py)?;
    let s = posterior_summary(&ensemble).map_err(to_py)?;
    Ok(s.names
        .iter()
        .cloned()
        .zip(s.mean.iter().copied().zip(s.std.iter().copied()))
        .collect())
}

/// A normalised dataset directory.
#[pyclass(frozen)]
struct Dataset {
    inner: CoreDataset,
}

#[pymethods]
impl Dataset {
    #[new]
    fn new(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: CoreDataset::load(&path).map_err(to_py)?,
        })
    }

    #[getter]
    fn region(&self) -> &str {
        &self.inner.region
    }

    /// Last observed day.
    #[getter]
    fn horizon(&self) -> usize {
        self.inner.horizon()
    }

    #[getter]
    fn lockdown_day(&self) -> usize {
        self.inner.lockdown_day()
    }

    /// Daily bands over `days` days for one or more parameter vectors.
    /// Returns a dict of lists keyed by series and quantile, e.g.
    /// `hospitalised_median`.
    #[pyo3(signature = (days, parameters=None))]
    fn simulate(
        &self,
        py: Python<'_>,
        days: usize,
        parameters: Option<Vec<Vec<f64>>>,
    ) -> PyResult<BTreeMap<String, Vec<f64>>> {
        let samples = self::parameters(parameters)?;
        let runner = self.inner.runner().map_err(to_py)?;
        let rows = py
            .detach(|| historical_bands(&runner, &samples, days))
            .map_err(to_py)?;
        Ok(columns(&rows))
    }

    /// Runs PMC-ABC with uniform priors and returns the ensemble as JSON.
    #[pyo3(signature = (generations=3, particles=100, seed=0, until_day=None))]
    fn calibrate(
        &self,
        py: Python<'_>,
        generations: usize,
        particles: usize,
        seed: u64,
        until_day: Option<usize>,
    ) -> PyResult<String> {
        let config = AbcConfig {
            generations,
            particles,
            seed,
            ..Default::default()
        };
        config.validate().map_err(to_py)?;
        let obs = match until_day {
            Some(d) if d == 0 || d > self.inner.horizon() => {
                return Err(PyValueError::new_err(format!(
                    "until_day must lie in 1..={}",
                    self.inner.horizon()
                )))
            }
            Some(d) => self.inner.observations.truncated(d),
            None => self.inner.observations.clone(),
        };
        let runner = self.inner.runner().map_err(to_py)?;
        let prior = PriorSpecification::default();
        py.detach(|| pmc_abc(&runner, &obs, &prior, &config, &Silent))
            .and_then(|e| e.to_json())
            .map_err(to_py)
    }
}

fn columns(rows: &[BandRow]) -> BTreeMap<String, Vec<f64>> {
    let mut out = BTreeMap::new();
    out.insert(
        "day".to_string(),
        rows.iter().map(|r| r.day as f64).collect(),
    );
    for (name, band) in [
        (
            "hospitalised",
            (|r: &BandRow| r.hospitalised) as fn(&BandRow) -> _,
        ),
        ("deaths", |r: &BandRow| r.deaths),
        ("r", |r: &BandRow| r.r),
    ] {
        out.insert(
            format!("{name}_lower"),
            rows.iter().map(|r| band(r).lower).collect(),
        );
        out.insert(
            format!("{name}_median"),
            rows.iter().map(|r| band(r).median).collect(),
        );
        out.insert(
            format!("{name}_upper"),
            rows.iter().map(|r| band(r).upper).collect(),
        );
    }
    out
}

#[pymodule]
#[pyo3(name = "_native")]
fn native(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(parameter_names, m)?)?;
    m.add_function(wrap_pyfunction!(posterior_mean, m)?)?;
    m.add_function(wrap_pyfunction!(spectral_radius, m)?)?;
    m.add_function(wrap_pyfunction!(ensemble_summary, m)?)?;
    m.add_class::<Dataset>()?;
    Ok(())
}
