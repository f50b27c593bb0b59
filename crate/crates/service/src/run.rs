//! Runs a parsed job against the core library and renders its artifacts.

use std::path::Path;

use epicontrol::abc::{bootstrap_resample, pmc_abc, PosteriorEnsemble};
use epicontrol::control::{
    dynamic_update, historical_bands, plan_from_ensemble, write_band_series_csv, write_bands_csv,
    BandSeries, OptimizationArtifact, OptimizationConfig, UpdateOutcome,
};
use epicontrol::data::{
    england_census, england_contacts, parse_census, parse_contact_matrices, CountryPreset,
};
use epicontrol::dataset::{ingest_text, Dataset, DatasetBundle, IngestTexts};
use epicontrol::mobility::AgeBandMapping;
use epicontrol::model::EpidemicParameters;
use epicontrol::monitor::Monitor;
use epicontrol::{Error, Result};

use crate::jobs::{DatasetRef, JobSpec};
use crate::store::{sha256_hex, ArtifactStore};

pub const JSON: &str = "application/json";
pub const CSV: &str = "text/csv";

/// An artifact produced by a job, not yet stored.
#[derive(Debug, Clone)]
pub struct Output {
    pub name: &'static str,
    pub media_type: &'static str,
    pub bytes: Vec<u8>,
}

impl Output {
    fn json<T: serde::Serialize>(name: &'static str, value: &T) -> Result<Self> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        Ok(Self {
            name,
            media_type: JSON,
            bytes,
        })
    }

    fn csv(name: &'static str, write: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Self {
        let mut bytes = Vec::new();
        write(&mut bytes).expect("in-memory write");
        Self {
            name,
            media_type: CSV,
            bytes,
        }
    }
}

#[derive(Debug, Default)]
pub struct Outcome {
    pub outputs: Vec<Output>,
    /// The job stopped early on request but still produced outputs.
    pub cancelled: bool,
    pub note: Option<String>,
}

/// Read-only inputs a job may resolve references against.
pub struct Resources<'a> {
    pub datasets_dir: &'a Path,
    pub store: &'a ArtifactStore,
}

impl Resources<'_> {
    pub fn dataset(&self, d: &DatasetRef) -> Result<Dataset> {
        match (&d.name, &d.artifact) {
            (Some(name), _) => {
                let dir = self.datasets_dir.join(name);
                if !dir.is_dir() {
                    return Err(Error::validation(format!("unknown dataset {name:?}")));
                }
                Dataset::load(&dir)
            }
            (None, Some(r)) => {
                let bytes = self.artifact(r)?;
                let bundle: DatasetBundle = serde_json::from_slice(&bytes)
                    .map_err(|e| Error::parse(format!("artifact {r}"), e.to_string()))?;
                Dataset::from_bundle(&bundle)
            }
            (None, None) => Err(Error::validation("dataset reference is empty")),
        }
    }

    pub fn ensemble(&self, r: &str) -> Result<PosteriorEnsemble> {
        let bytes = self.artifact(r)?;
        let text = std::str::from_utf8(&bytes)
            .map_err(|e| Error::parse(format!("artifact {r}"), e.to_string()))?;
        PosteriorEnsemble::from_json(text)
    }

    fn artifact(&self, r: &str) -> Result<Vec<u8>> {
        match self.store.get(r) {
            Ok(Some((_, bytes))) => Ok(bytes),
            Ok(None) => Err(Error::validation(format!("unknown artifact {r}"))),
            Err(e) => Err(Error::io(r, e)),
        }
    }
}

fn plan_outputs(artifact: &OptimizationArtifact) -> Result<Vec<Output>> {
    let rows = &artifact.result.bands;
    let mut out = vec![
        Output::json("optimization.json", artifact)?,
        Output {
            name: "schedule.csv",
            media_type: CSV,
            bytes: artifact.schedule_csv().into_bytes(),
        },
    ];
    for (name, series) in [
        ("hospitalised_bands.csv", BandSeries::Hospitalised),
        ("deaths_bands.csv", BandSeries::Deaths),
        ("r_bands.csv", BandSeries::R),
    ] {
        out.push(Output::csv(name, |b| {
            write_band_series_csv(rows, series, b)
        }));
    }
    Ok(out)
}

fn plan(
    res: &Resources<'_>,
    dataset: &DatasetRef,
    ensemble_ref: &str,
    t0: Option<usize>,
    config: &OptimizationConfig,
    monitor: &dyn Monitor,
) -> Result<Outcome> {
    let ds = res.dataset(dataset)?;
    let ensemble = res.ensemble(ensemble_ref)?;
    let t0 = t0.unwrap_or(ds.horizon());
    let result = plan_from_ensemble(&ds.runner()?, &ensemble, t0, config, monitor)?;
    let cancelled = result.cancelled;
    let note = cancelled.then(|| {
        format!(
            "cancelled after {} of {} days; the applied part of the schedule was kept",
            result.schedule.len(),
            config.horizon
        )
    });
    let artifact =
        OptimizationArtifact::new(config.clone(), Some(ensemble_ref.to_string()), result);
    Ok(Outcome {
        outputs: plan_outputs(&artifact)?,
        cancelled,
        note,
    })
}

pub fn execute(spec: &JobSpec, res: &Resources<'_>, monitor: &dyn Monitor) -> Result<Outcome> {
    match spec {
        JobSpec::Ingest(j) => {
            let calendar_name = j.calendar.as_deref().unwrap_or(&j.region);
            let calendar = CountryPreset::by_name(calendar_name).ok_or_else(|| {
                Error::validation(format!("no calendar preset for {calendar_name:?}"))
            })?;
            let contacts = match &j.contacts_txt {
                Some(t) => parse_contact_matrices(t, "contacts_txt")?,
                None => england_contacts(),
            };
            let census = match &j.census_txt {
                Some(t) => parse_census(t, "census_txt")?,
                None => england_census(),
            };
            let mapping = AgeBandMapping {
                overrides: j.age_map.clone(),
            };
            let texts = IngestTexts {
                mobility: (&j.mobility_csv, "mobility_csv"),
                deaths: (&j.deaths_csv, "deaths_csv"),
                hospital: (&j.hospital_csv, "hospital_csv"),
            };
            let mut ds = ingest_text(texts, &j.region, calendar, &mapping, contacts, census)?;
            ds.synthetic = j.synthetic;
            ds.notes = j.notes.clone();
            monitor.progress(1.0, "ingested");
            Ok(Outcome {
                outputs: vec![Output::json("dataset.json", &ds.to_bundle())?],
                ..Default::default()
            })
        }
        JobSpec::Calibrate(j) => {
            let ds = res.dataset(&j.dataset)?;
            let obs = match j.until_day {
                Some(d) if d > ds.horizon() => {
                    return Err(Error::validation(format!(
                        "until_day {d} is past the last observed day {}",
                        ds.horizon()
                    )))
                }
                Some(d) => ds.observations.truncated(d),
                None => ds.observations.clone(),
            };
            let ensemble = pmc_abc(&ds.runner()?, &obs, &j.prior, &j.abc, monitor)?;
            let note = (!ensemble.warnings.is_empty()).then(|| ensemble.warnings.join("; "));
            Ok(Outcome {
                outputs: vec![Output {
                    name: "ensemble.json",
                    media_type: JSON,
                    bytes: ensemble.to_json()?.into_bytes(),
                }],
                note,
                ..Default::default()
            })
        }
        JobSpec::Simulate(j) => {
            let ds = res.dataset(&j.dataset)?;
            let samples = match &j.ensemble {
                Some(r) => bootstrap_resample(&res.ensemble(r)?, j.samples, j.seed)?,
                None => vec![EpidemicParameters::england_may_posterior_mean()],
            };
            let days = j.days.unwrap_or(ds.mobility.end_day());
            let rows = historical_bands(&ds.runner()?, &samples, days)?;
            monitor.progress(1.0, "simulated");
            Ok(Outcome {
                outputs: vec![Output::csv("bands.csv", |b| write_bands_csv(&rows, b))],
                ..Default::default()
            })
        }
        JobSpec::Optimize(j) | JobSpec::Nmpc(j) => {
            plan(res, &j.dataset, &j.ensemble, j.t0, &j.control, monitor)
        }
        JobSpec::DynamicUpdate(j) => {
            let ds = res.dataset(&j.dataset)?;
            let previous = res.ensemble(&j.ensemble)?;
            let outcome = dynamic_update(
                &ds.runner()?,
                previous.observation_horizon,
                &ds.observations,
                &j.prior,
                &j.abc,
                &j.control,
                monitor,
            )?;
            match outcome {
                UpdateOutcome::Rejected { reason } => {
                    Err(Error::validation(format!("update rejected: {reason}")))
                }
                UpdateOutcome::Updated { ensemble, nmpc, .. } => {
                    let ensemble = Output {
                        name: "ensemble.json",
                        media_type: JSON,
                        bytes: ensemble.to_json()?.into_bytes(),
                    };
                    let cancelled = nmpc.cancelled;
                    let artifact = OptimizationArtifact::new(
                        j.control.clone(),
                        Some(sha256_hex(&ensemble.bytes)),
                        *nmpc,
                    );
                    let mut outputs = vec![ensemble];
                    outputs.extend(plan_outputs(&artifact)?);
                    Ok(Outcome {
                        outputs,
                        cancelled,
                        note: cancelled.then(|| "cancelled during re-planning".to_string()),
                    })
                }
            }
        }
    }
}
