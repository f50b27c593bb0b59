//! A dataset directory: normalised inputs for one region plus a manifest.
//!
//! ```text
//! dataset.json       manifest: region, calendar, file checksums, ingest report
//! mobility.csv       day,m_work,m_school,m_other
//! observations.csv   day,deaths_1..deaths_5,hospitalised
//! contacts.txt       location contact matrices
//! census.txt         population per age group
//! ```
//!
//! Every file is verified against its manifest checksum on load.

use std::collections::BTreeMap;
use std::path::Path;

use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::abc::{ModelRunner, SimulatorRunner, HOSPITAL_FIRST_DAY};
use crate::data::{
    parse_census, parse_contact_matrices, sha256_hex, verify_checksum, write_census,
    write_contact_matrices, CountryPreset,
};
use crate::error::{Error, Result};
use crate::mobility::{
    build_mobility_series, parse_health_readers, parse_mobility_reader, AgeBandMapping,
    HealthReport, MobilityParseReport, MobilitySeries, ObservationSet, PipelineConfig,
    PipelineReport, SchoolPolicy,
};
use crate::model::{ContactMatrixSet, EpidemicParameters, PopulationCensus, Simulator};
use crate::rng::stream_rng;

pub const DATASET_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "dataset.json";

const FILES: [(&str, &str); 4] = [
    ("mobility", "mobility.csv"),
    ("observations", "observations.csv"),
    ("contacts", "contacts.txt"),
    ("census", "census.txt"),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestReport {
    pub mobility: MobilityParseReport,
    pub pipeline: PipelineReport,
    pub health: HealthReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub region: String,
    pub calendar: CountryPreset,
    /// Last observed day.
    pub horizon: usize,
    /// Observations were generated by the model rather than reported.
    #[serde(default)]
    pub synthetic: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ingest: Option<IngestReport>,
    pub files: BTreeMap<String, FileEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub region: String,
    pub calendar: CountryPreset,
    pub mobility: MobilitySeries,
    pub observations: ObservationSet,
    pub contacts: ContactMatrixSet,
    pub census: PopulationCensus,
    pub synthetic: bool,
    pub notes: Vec<String>,
    pub ingest: Option<IngestReport>,
}

impl Dataset {
    pub fn horizon(&self) -> usize {
        self.observations.horizon()
    }

    pub fn lockdown_day(&self) -> usize {
        self.calendar.lockdown_day()
    }

    pub fn simulator(&self) -> Result<Simulator> {
        Simulator::new(self.contacts.clone(), self.census)
    }

    pub fn runner(&self) -> Result<SimulatorRunner> {
        Ok(SimulatorRunner {
            simulator: self.simulator()?,
            mobility: self.mobility.clone(),
            lockdown_start: self.lockdown_day(),
        })
    }

    /// The same dataset with observations cut at `horizon`.
    pub fn truncated(&self, horizon: usize) -> Dataset {
        Dataset {
            observations: self.observations.truncated(horizon),
            ..self.clone()
        }
    }

    fn file_bytes(&self) -> Vec<(&'static str, &'static str, Vec<u8>)> {
        let mut mobility = Vec::new();
        self.mobility
            .write_csv(&mut mobility)
            .expect("in-memory write");
        let mut observations = Vec::new();
        self.observations
            .write_csv(&mut observations)
            .expect("in-memory write");
        let contents = [
            mobility,
            observations,
            write_contact_matrices(&self.contacts).into_bytes(),
            write_census(&self.census).into_bytes(),
        ];
        FILES
            .iter()
            .zip(contents)
            .map(|((role, name), bytes)| (*role, *name, bytes))
            .collect()
    }

    pub fn manifest(&self) -> DatasetManifest {
        let files = self
            .file_bytes()
            .into_iter()
            .map(|(role, name, bytes)| {
                (
                    role.to_string(),
                    FileEntry {
                        path: name.to_string(),
                        sha256: sha256_hex(&bytes),
                    },
                )
            })
            .collect();
        DatasetManifest {
            schema_version: DATASET_SCHEMA_VERSION,
            region: self.region.clone(),
            calendar: self.calendar.clone(),
            horizon: self.horizon(),
            synthetic: self.synthetic,
            notes: self.notes.clone(),
            ingest: self.ingest.clone(),
            files,
        }
    }

    /// Writes every file and the manifest into `dir`, creating it if needed.
    pub fn save(&self, dir: &Path) -> Result<DatasetManifest> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (_, name, bytes) in self.file_bytes() {
            let p = dir.join(name);
            std::fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
        }
        let manifest = self.manifest();
        let p = dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        Ok(manifest)
    }

    pub fn load(dir: &Path) -> Result<Dataset> {
        let mp = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&mp).map_err(|e| Error::io(&mp, e))?;
        let manifest: DatasetManifest = serde_json::from_str(&text)
            .map_err(|e| Error::parse(mp.display().to_string(), e.to_string()))?;
        Self::from_manifest(manifest, &mp.display().to_string(), |entry| {
            let p = dir.join(&entry.path);
            let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
            Ok((text, p.display().to_string()))
        })
    }

    /// The whole dataset as one JSON-serialisable document.
    pub fn to_bundle(&self) -> DatasetBundle {
        let files = self
            .file_bytes()
            .into_iter()
            .map(|(_, name, bytes)| {
                (
                    name.to_string(),
                    String::from_utf8(bytes).expect("ascii files"),
                )
            })
            .collect();
        DatasetBundle {
            manifest: self.manifest(),
            files,
        }
    }

    pub fn from_bundle(bundle: &DatasetBundle) -> Result<Dataset> {
        Self::from_manifest(bundle.manifest.clone(), "bundle", |entry| {
            let text = bundle
                .files
                .get(&entry.path)
                .ok_or_else(|| Error::structural(format!("bundle lacks file {}", entry.path)))?;
            Ok((text.clone(), entry.path.clone()))
        })
    }

    fn from_manifest(
        manifest: DatasetManifest,
        source: &str,
        fetch: impl Fn(&FileEntry) -> Result<(String, String)>,
    ) -> Result<Dataset> {
        if manifest.schema_version != DATASET_SCHEMA_VERSION {
            return Err(Error::validation(format!(
                "{source}: unsupported dataset schema version {}",
                manifest.schema_version
            )));
        }
        let read = |role: &str| -> Result<(String, String)> {
            let entry = manifest
                .files
                .get(role)
                .ok_or_else(|| Error::structural(format!("{source}: no {role} file listed")))?;
            let (text, src) = fetch(entry)?;
            verify_checksum(Path::new(&src), text.as_bytes(), Some(&entry.sha256))?;
            Ok((text, src))
        };
        let (text, src) = read("mobility")?;
        let mobility = MobilitySeries::parse_csv(&text, &src)?;
        let (text, src) = read("observations")?;
        let observations = ObservationSet::parse_csv(&text, &src)?;
        let (text, src) = read("contacts")?;
        let contacts = parse_contact_matrices(&text, &src)?;
        let (text, src) = read("census")?;
        let census = parse_census(&text, &src)?;
        if observations.horizon() != manifest.horizon {
            return Err(Error::structural(format!(
                "{source}: manifest horizon {} but observations cover {} days",
                manifest.horizon,
                observations.horizon()
            )));
        }
        let ds = Dataset {
            region: manifest.region,
            calendar: manifest.calendar,
            mobility,
            observations,
            contacts,
            census,
            synthetic: manifest.synthetic,
            notes: manifest.notes,
            ingest: manifest.ingest,
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Mobility must cover every day the observations need.
    pub fn validate(&self) -> Result<()> {
        self.observations.validate()?;
        let missing = self.mobility.missing_days(0, self.horizon());
        if let Some(first) = missing.first() {
            return Err(Error::structural(format!(
                "mobility series misses {} day(s) inside the observation window, first day {first}",
                missing.len()
            )));
        }
        Ok(())
    }
}

/// A dataset as one document: the manifest plus the text of every file,
/// keyed by file name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetBundle {
    pub manifest: DatasetManifest,
    pub files: BTreeMap<String, String>,
}

/// Raw input files for [`ingest`].
#[derive(Debug, Clone, Copy)]
pub struct IngestSources<'a> {
    pub mobility: &'a Path,
    pub deaths: &'a Path,
    pub hospital: &'a Path,
}

/// Builds a dataset from a Google mobility report and health CSVs on disk.
pub fn ingest(
    sources: IngestSources<'_>,
    region: &str,
    calendar: CountryPreset,
    mapping: &AgeBandMapping,
    contacts: ContactMatrixSet,
    census: PopulationCensus,
) -> Result<Dataset> {
    let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| Error::io(p, e));
    let texts = IngestTexts {
        mobility: (
            &read(sources.mobility)?,
            &sources.mobility.display().to_string(),
        ),
        deaths: (
            &read(sources.deaths)?,
            &sources.deaths.display().to_string(),
        ),
        hospital: (
            &read(sources.hospital)?,
            &sources.hospital.display().to_string(),
        ),
    };
    ingest_text(texts, region, calendar, mapping, contacts, census)
}

/// Raw CSV contents for [`ingest_text`], each with a source name for
/// diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct IngestTexts<'a> {
    pub mobility: (&'a str, &'a str),
    pub deaths: (&'a str, &'a str),
    pub hospital: (&'a str, &'a str),
}

pub fn ingest_text(
    texts: IngestTexts<'_>,
    region: &str,
    calendar: CountryPreset,
    mapping: &AgeBandMapping,
    contacts: ContactMatrixSet,
    census: PopulationCensus,
) -> Result<Dataset> {
    let (records, mobility_report) =
        parse_mobility_reader(texts.mobility.0.as_bytes(), region, texts.mobility.1)?;
    let config = PipelineConfig {
        epidemic_start: calendar.epidemic_start,
        school: SchoolPolicy::closing(calendar.school_closure),
        ..Default::default()
    };
    let (mobility, pipeline) = build_mobility_series(&records, &config)?;
    let (observations, health) = parse_health_readers(
        texts.deaths.0.as_bytes(),
        texts.deaths.1,
        texts.hospital.0.as_bytes(),
        texts.hospital.1,
        mapping,
        calendar.epidemic_start,
    )?;
    let ds = Dataset {
        region: region.to_string(),
        calendar,
        mobility,
        observations,
        contacts,
        census,
        synthetic: false,
        notes: Vec::new(),
        ingest: Some(IngestReport {
            mobility: mobility_report,
            pipeline,
            health,
        }),
    };
    ds.validate()?;
    Ok(ds)
}

/// Noise added by [`synthetic_observations`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservationNoise {
    pub seed: u64,
    /// Relative standard deviation of the occupancy noise.
    pub occupancy_sd: f64,
}

/// Model output at `params` over days `1..=horizon`, with occupancy reported
/// from the usual hospital start day. With `noise`, daily deaths are Poisson
/// draws around the simulated counts and occupancy gets Gaussian relative
/// error.
pub fn synthetic_observations(
    runner: &SimulatorRunner,
    params: &EpidemicParameters,
    horizon: usize,
    noise: Option<ObservationNoise>,
) -> Result<ObservationSet> {
    let mut obs = runner.run(params, horizon)?;
    for (k, h) in obs.hospitalised.iter_mut().enumerate() {
        if k + 1 < HOSPITAL_FIRST_DAY {
            *h = None;
        }
    }
    let Some(noise) = noise else {
        return Ok(obs);
    };
    if !(noise.occupancy_sd >= 0.0 && noise.occupancy_sd.is_finite()) {
        return Err(Error::validation("occupancy noise must be finite and >= 0"));
    }
    let mut rng = stream_rng(noise.seed, 0, 0);
    let rel = Normal::new(0.0, noise.occupancy_sd).map_err(|e| Error::validation(e.to_string()))?;
    for row in &mut obs.deaths {
        for v in row.iter_mut() {
            *v = if *v > 0.0 {
                Poisson::new(*v).map(|p| p.sample(&mut rng)).unwrap_or(*v)
            } else {
                0.0
            };
        }
    }
    for h in obs.hospitalised.iter_mut().flatten() {
        let e: f64 = rel.sample(&mut rng);
        *h = (*h * (1.0 + e)).max(0.0).round();
    }
    obs.validate()?;
    Ok(obs)
}
