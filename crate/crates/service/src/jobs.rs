//! Job kinds, their configuration schemas and the persisted job record.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use epicontrol::abc::{AbcConfig, PriorSpecification};
use epicontrol::control::OptimizationConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JobKind {
    Ingest,
    Calibrate,
    Simulate,
    Optimize,
    Nmpc,
    DynamicUpdate,
}

impl JobKind {
    pub const ALL: [JobKind; 6] = [
        JobKind::Ingest,
        JobKind::Calibrate,
        JobKind::Simulate,
        JobKind::Optimize,
        JobKind::Nmpc,
        JobKind::DynamicUpdate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            JobKind::Ingest => "ingest",
            JobKind::Calibrate => "calibrate",
            JobKind::Simulate => "simulate",
            JobKind::Optimize => "optimize",
            JobKind::Nmpc => "nmpc",
            JobKind::DynamicUpdate => "dynamic-update",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

impl JobStatus {
    pub fn is_finished(self) -> bool {
        matches!(self, JobStatus::Done | JobStatus::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactLink {
    pub name: String,
    #[serde(rename = "ref")]
    pub reference: String,
    pub media_type: String,
    pub size: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub id: String,
    pub kind: JobKind,
    pub status: JobStatus,
    /// Fraction in `[0, 1]`; never decreases.
    pub progress: f64,
    /// Latest progress message, e.g. the generation or day being worked on.
    pub message: Option<String>,
    pub cancel_requested: bool,
    pub cancelled: bool,
    /// The submitted configuration with every default filled in.
    pub config: Value,
    pub artifacts: Vec<ArtifactLink>,
    pub error: Option<String>,
    pub created_at: DateTime<Utc>,
    pub started_at: Option<DateTime<Utc>>,
    pub finished_at: Option<DateTime<Utc>>,
}

/// Where a job reads its dataset from: a directory under the service's
/// `datasets/` folder, or a dataset bundle produced by an ingest job.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRef {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub artifact: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestJob {
    pub region: String,
    /// Calendar preset; defaults to the region name.
    #[serde(default)]
    pub calendar: Option<String>,
    pub mobility_csv: String,
    pub deaths_csv: String,
    pub hospital_csv: String,
    /// Contact matrices in the bundled text format; defaults to England.
    #[serde(default)]
    pub contacts_txt: Option<String>,
    #[serde(default)]
    pub census_txt: Option<String>,
    #[serde(default)]
    pub age_map: BTreeMap<String, usize>,
    #[serde(default)]
    pub synthetic: bool,
    #[serde(default)]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateJob {
    pub dataset: DatasetRef,
    #[serde(default)]
    pub prior: PriorSpecification,
    #[serde(default)]
    pub abc: AbcConfig,
    /// Fit only observation days `1..=until_day`.
    #[serde(default)]
    pub until_day: Option<usize>,
}

fn default_samples() -> usize {
    50
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateJob {
    pub dataset: DatasetRef,
    /// Ensemble artifact; without one the bundled posterior means are used.
    #[serde(default)]
    pub ensemble: Option<String>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Days to simulate; defaults to the end of the mobility series.
    #[serde(default)]
    pub days: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeJob {
    pub dataset: DatasetRef,
    pub ensemble: String,
    /// First controlled day; defaults to the dataset's last observed day.
    #[serde(default)]
    pub t0: Option<usize>,
    #[serde(default)]
    pub control: OptimizationConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UpdateJob {
    /// Dataset with observations past the previous ensemble's horizon.
    pub dataset: DatasetRef,
    /// Ensemble artifact of the previous calibration.
    pub ensemble: String,
    #[serde(default)]
    pub prior: PriorSpecification,
    #[serde(default)]
    pub abc: AbcConfig,
    #[serde(default)]
    pub control: OptimizationConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub enum JobSpec {
    Ingest(IngestJob),
    Calibrate(CalibrateJob),
    Simulate(SimulateJob),
    Optimize(OptimizeJob),
    Nmpc(OptimizeJob),
    DynamicUpdate(UpdateJob),
}

/// A schema or semantic violation with the JSON path it applies to.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldError {
    pub path: String,
    pub message: String,
}

impl FieldError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

fn parse<T: DeserializeOwned>(config: Value) -> Result<T, FieldError> {
    serde_path_to_error::deserialize(config).map_err(|e| {
        let inner = e.path().to_string();
        let path = if inner == "." {
            "config".to_string()
        } else {
            format!("config.{inner}")
        };
        FieldError::new(path, e.into_inner().to_string())
    })
}

/// Fills `seed` into `config.<section>` when the submitter left it out.
fn default_seed(config: &mut Value, section: Option<&str>, seed: u64) {
    let target = match section {
        Some(s) => {
            let Some(obj) = config.as_object_mut() else {
                return;
            };
            obj.entry(s)
                .or_insert_with(|| Value::Object(Default::default()))
        }
        None => config,
    };
    if let Some(obj) = target.as_object_mut() {
        obj.entry("seed").or_insert(Value::from(seed));
    }
}

/// Turns a core validation message into a path by finding the first field
/// of `section` it mentions.
pub fn locate<T: Serialize>(section: &str, value: &T, message: String) -> FieldError {
    let fields: Vec<String> = match serde_json::to_value(value) {
        Ok(Value::Object(m)) => m.keys().cloned().collect(),
        _ => Vec::new(),
    };
    let words: Vec<&str> = message
        .split(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
        .collect();
    let field = words
        .iter()
        .find(|w| fields.iter().any(|f| f == *w))
        .map(|w| format!("{section}.{w}"));
    FieldError::new(field.unwrap_or_else(|| section.to_string()), message)
}

impl JobSpec {
    /// Parses `config` against `kind`'s schema, filling defaults.
    pub fn parse(kind: JobKind, mut config: Value, seed: u64) -> Result<Self, FieldError> {
        if config.is_null() {
            config = Value::Object(Default::default());
        }
        let spec = match kind {
            JobKind::Ingest => JobSpec::Ingest(parse(config)?),
            JobKind::Calibrate => {
                default_seed(&mut config, Some("abc"), seed);
                JobSpec::Calibrate(parse(config)?)
            }
            JobKind::Simulate => {
                default_seed(&mut config, None, seed);
                JobSpec::Simulate(parse(config)?)
            }
            JobKind::Optimize | JobKind::Nmpc => {
                default_seed(&mut config, Some("control"), seed);
                let mut job: OptimizeJob = parse(config)?;
                job.control.receding = kind == JobKind::Nmpc;
                if !job.control.receding {
                    job.control.prediction_horizon = job.control.horizon;
                }
                if kind == JobKind::Nmpc {
                    JobSpec::Nmpc(job)
                } else {
                    JobSpec::Optimize(job)
                }
            }
            JobKind::DynamicUpdate => {
                default_seed(&mut config, Some("abc"), seed);
                default_seed(&mut config, Some("control"), seed);
                let mut job: UpdateJob = parse(config)?;
                job.control.receding = true;
                JobSpec::DynamicUpdate(job)
            }
        };
        spec.check()?;
        Ok(spec)
    }

    pub fn kind(&self) -> JobKind {
        match self {
            JobSpec::Ingest(_) => JobKind::Ingest,
            JobSpec::Calibrate(_) => JobKind::Calibrate,
            JobSpec::Simulate(_) => JobKind::Simulate,
            JobSpec::Optimize(_) => JobKind::Optimize,
            JobSpec::Nmpc(_) => JobKind::Nmpc,
            JobSpec::DynamicUpdate(_) => JobKind::DynamicUpdate,
        }
    }

    /// The normalised configuration stored on the job record.
    pub fn snapshot(&self) -> Value {
        let v = match self {
            JobSpec::Ingest(j) => serde_json::to_value(j),
            JobSpec::Calibrate(j) => serde_json::to_value(j),
            JobSpec::Simulate(j) => serde_json::to_value(j),
            JobSpec::Optimize(j) | JobSpec::Nmpc(j) => serde_json::to_value(j),
            JobSpec::DynamicUpdate(j) => serde_json::to_value(j),
        };
        v.expect("job configs serialise")
    }

    /// Checks that need no I/O.
    fn check(&self) -> Result<(), FieldError> {
        let abc = |c: &AbcConfig| {
            c.validate()
                .map_err(|e| locate("config.abc", c, e.to_string()))
        };
        let control = |c: &OptimizationConfig| {
            c.validate()
                .map_err(|e| locate("config.control", c, e.to_string()))
        };
        match self {
            JobSpec::Ingest(j) => {
                if j.region.trim().is_empty() {
                    return Err(FieldError::new("config.region", "region must not be empty"));
                }
                Ok(())
            }
            JobSpec::Calibrate(j) => {
                check_dataset(&j.dataset)?;
                if j.until_day == Some(0) {
                    return Err(FieldError::new(
                        "config.until_day",
                        "until_day must be >= 1",
                    ));
                }
                abc(&j.abc)
            }
            JobSpec::Simulate(j) => {
                check_dataset(&j.dataset)?;
                if j.samples == 0 {
                    return Err(FieldError::new("config.samples", "samples must be >= 1"));
                }
                if let Some(e) = &j.ensemble {
                    check_ref("config.ensemble", e)?;
                }
                Ok(())
            }
            JobSpec::Optimize(j) | JobSpec::Nmpc(j) => {
                check_dataset(&j.dataset)?;
                check_ref("config.ensemble", &j.ensemble)?;
                control(&j.control)
            }
            JobSpec::DynamicUpdate(j) => {
                check_dataset(&j.dataset)?;
                check_ref("config.ensemble", &j.ensemble)?;
                abc(&j.abc)?;
                control(&j.control)
            }
        }
    }
}

fn check_ref(path: &str, r: &str) -> Result<(), FieldError> {
    if crate::store::is_ref(r) {
        Ok(())
    } else {
        Err(FieldError::new(
            path,
            "expected a 64-digit lowercase hex artifact reference",
        ))
    }
}

fn check_dataset(d: &DatasetRef) -> Result<(), FieldError> {
    match (&d.name, &d.artifact) {
        (Some(name), None) => {
            let ok = !name.is_empty()
                && name
                    .bytes()
                    .all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_');
            if ok {
                Ok(())
            } else {
                Err(FieldError::new(
                    "config.dataset.name",
                    "dataset names use only letters, digits, '-' and '_'",
                ))
            }
        }
        (None, Some(r)) => check_ref("config.dataset.artifact", r),
        _ => Err(FieldError::new(
            "config.dataset",
            "give exactly one of \"name\" or \"artifact\"",
        )),
    }
}
