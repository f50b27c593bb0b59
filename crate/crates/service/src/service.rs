//! Job manager: accepts submissions, runs them one at a time on a shared
//! worker pool, and persists records so they survive restarts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use chrono::Utc;
use epicontrol::monitor::Monitor;
use epicontrol::Error;
use serde_json::Value;

use crate::jobs::{ArtifactLink, FieldError, JobKind, JobRecord, JobSpec, JobStatus};
use crate::run::{execute, Outcome, Resources};
use crate::store::{write_atomic, ArtifactStore};

/// Progress is published in steps of this size.
const PROGRESS_QUANTUM: f64 = 0.005;
/// Message-only updates are published at most this often.
const MESSAGE_INTERVAL: Duration = Duration::from_millis(200);

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Holds `datasets/`, `jobs/` and `artifacts/`.
    pub data_dir: PathBuf,
    /// Threads in the worker pool.
    pub workers: usize,
    /// Seed used when a submission does not give one.
    pub default_seed: u64,
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self {
            data_dir: data_dir.into(),
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            default_seed: 0,
        }
    }
}

#[derive(Debug)]
pub enum ServiceError {
    Invalid(FieldError),
    NotFound(String),
    Conflict(String),
    Internal(String),
}

impl std::fmt::Display for ServiceError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ServiceError::Invalid(e) => write!(f, "{}: {}", e.path, e.message),
            ServiceError::NotFound(m) | ServiceError::Conflict(m) | ServiceError::Internal(m) => {
                f.write_str(m)
            }
        }
    }
}

impl std::error::Error for ServiceError {}

impl From<FieldError> for ServiceError {
    fn from(e: FieldError) -> Self {
        ServiceError::Invalid(e)
    }
}

impl From<std::io::Error> for ServiceError {
    fn from(e: std::io::Error) -> Self {
        ServiceError::Internal(e.to_string())
    }
}

struct Job {
    spec: JobSpec,
    record: Mutex<JobRecord>,
    cancel: AtomicBool,
    last_message_at: Mutex<Instant>,
    path: PathBuf,
}

impl Job {
    fn snapshot(&self) -> JobRecord {
        self.record
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .clone()
    }

    /// Applies `f` to the record and writes it to disk while still holding
    /// the lock, so the file never lags behind what readers have seen.
    fn update(&self, f: impl FnOnce(&mut JobRecord) -> bool) {
        let mut rec = self.record.lock().unwrap_or_else(|e| e.into_inner());
        if f(&mut rec) {
            if let Err(e) = persist(&self.path, &rec) {
                log::error!("job {}: cannot persist record: {e}", rec.id);
            }
        }
    }
}

impl Monitor for Job {
    fn is_cancelled(&self) -> bool {
        self.cancel.load(Ordering::SeqCst)
    }

    fn progress(&self, fraction: f64, message: &str) {
        let q = ((fraction.clamp(0.0, 1.0) / PROGRESS_QUANTUM).floor() * PROGRESS_QUANTUM).min(1.0);
        let mut last = self
            .last_message_at
            .lock()
            .unwrap_or_else(|e| e.into_inner());
        self.update(|rec| {
            let advanced = q > rec.progress;
            let fresh =
                rec.message.as_deref() != Some(message) && last.elapsed() >= MESSAGE_INTERVAL;
            if !(advanced || fresh) {
                return false;
            }
            rec.progress = rec.progress.max(q);
            rec.message = Some(message.to_string());
            *last = Instant::now();
            true
        });
    }
}

fn persist(path: &Path, rec: &JobRecord) -> std::io::Result<()> {
    let mut json = serde_json::to_vec_pretty(rec)?;
    json.push(b'\n');
    write_atomic(path, &json)
}

struct Shared {
    datasets_dir: PathBuf,
    store: ArtifactStore,
    pool: rayon::ThreadPool,
}

struct Inner {
    config: ServiceConfig,
    shared: Arc<Shared>,
    jobs: RwLock<BTreeMap<String, Arc<Job>>>,
    queue: Mutex<Sender<Arc<Job>>>,
}

/// Cheaply cloneable handle to the running service.
#[derive(Clone)]
pub struct Service {
    inner: Arc<Inner>,
}

impl Service {
    /// Opens (or creates) the data directory. Jobs that were running when
    /// the previous process stopped are marked failed; queued ones are
    /// queued again.
    pub fn open(config: ServiceConfig) -> Result<Self, ServiceError> {
        let jobs_dir = config.data_dir.join("jobs");
        let datasets_dir = config.data_dir.join("datasets");
        std::fs::create_dir_all(&jobs_dir)?;
        std::fs::create_dir_all(&datasets_dir)?;
        let store = ArtifactStore::open(config.data_dir.join("artifacts"))?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers.max(1))
            .thread_name(|i| format!("epicontrol-worker-{i}"))
            .build()
            .map_err(|e| ServiceError::Internal(e.to_string()))?;
        let shared = Arc::new(Shared {
            datasets_dir,
            store,
            pool,
        });

        let (tx, rx) = channel();
        let mut jobs = BTreeMap::new();
        let mut requeue = Vec::new();
        for entry in std::fs::read_dir(&jobs_dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let job = match recover(&path, config.default_seed) {
                Ok(job) => Arc::new(job),
                Err(e) => {
                    log::warn!("skipping unreadable job file {}: {e}", path.display());
                    continue;
                }
            };
            let rec = job.snapshot();
            if rec.status == JobStatus::Queued {
                requeue.push((rec.created_at, job.clone()));
            }
            jobs.insert(rec.id.clone(), job);
        }
        requeue.sort_by_key(|(t, _)| *t);
        for (_, job) in requeue {
            tx.send(job).expect("receiver alive");
        }

        let worker_shared = shared.clone();
        std::thread::Builder::new()
            .name("epicontrol-dispatch".into())
            .spawn(move || dispatch(rx, worker_shared))?;

        Ok(Self {
            inner: Arc::new(Inner {
                config,
                shared,
                jobs: RwLock::new(jobs),
                queue: Mutex::new(tx),
            }),
        })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.inner.config
    }

    pub fn store(&self) -> &ArtifactStore {
        &self.inner.shared.store
    }

    /// Validates and queues a job. Returns the record as queued.
    pub fn submit(&self, kind: &str, config: Value) -> Result<JobRecord, ServiceError> {
        let kind = JobKind::parse(kind).ok_or_else(|| {
            let known: Vec<&str> = JobKind::ALL.iter().map(|k| k.name()).collect();
            FieldError::new(
                "kind",
                format!(
                    "unknown job kind {kind:?}; expected one of {}",
                    known.join(", ")
                ),
            )
        })?;
        let spec = JobSpec::parse(kind, config, self.inner.config.default_seed)?;
        self.check_references(&spec)?;

        let id = uuid::Uuid::new_v4().simple().to_string();
        let record = JobRecord {
            id: id.clone(),
            kind,
            status: JobStatus::Queued,
            progress: 0.0,
            message: None,
            cancel_requested: false,
            cancelled: false,
            config: spec.snapshot(),
            artifacts: Vec::new(),
            error: None,
            created_at: Utc::now(),
            started_at: None,
            finished_at: None,
        };
        let path = self
            .inner
            .config
            .data_dir
            .join("jobs")
            .join(format!("{id}.json"));
        persist(&path, &record)?;
        let job = Arc::new(Job {
            spec,
            record: Mutex::new(record.clone()),
            cancel: AtomicBool::new(false),
            last_message_at: Mutex::new(Instant::now()),
            path,
        });
        self.inner
            .jobs
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(id, job.clone());
        self.inner
            .queue
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .send(job)
            .map_err(|_| ServiceError::Internal("job dispatcher stopped".into()))?;
        Ok(record)
    }

    /// Reference checks that need the store or the filesystem.
    fn check_references(&self, spec: &JobSpec) -> Result<(), ServiceError> {
        let shared = &self.inner.shared;
        let res = Resources {
            datasets_dir: &shared.datasets_dir,
            store: &shared.store,
        };
        let dataset_exists = |d: &crate::jobs::DatasetRef| -> Result<(), FieldError> {
            match (&d.name, &d.artifact) {
                (Some(n), _) if !shared.datasets_dir.join(n).join("dataset.json").is_file() => Err(
                    FieldError::new("config.dataset.name", format!("unknown dataset {n:?}")),
                ),
                (_, Some(r)) if !shared.store.contains(r) => Err(FieldError::new(
                    "config.dataset.artifact",
                    format!("unknown artifact {r}"),
                )),
                _ => Ok(()),
            }
        };
        let ensemble_exists = |r: &str| -> Result<(), FieldError> {
            if shared.store.contains(r) {
                Ok(())
            } else {
                Err(FieldError::new(
                    "config.ensemble",
                    format!("unknown artifact {r}"),
                ))
            }
        };
        match spec {
            JobSpec::Ingest(_) => {}
            JobSpec::Calibrate(j) => dataset_exists(&j.dataset)?,
            JobSpec::Simulate(j) => {
                dataset_exists(&j.dataset)?;
                if let Some(r) = &j.ensemble {
                    ensemble_exists(r)?;
                }
            }
            JobSpec::Optimize(j) | JobSpec::Nmpc(j) => {
                dataset_exists(&j.dataset)?;
                ensemble_exists(&j.ensemble)?;
            }
            JobSpec::DynamicUpdate(j) => {
                dataset_exists(&j.dataset)?;
                ensemble_exists(&j.ensemble)?;
                let previous = res
                    .ensemble(&j.ensemble)
                    .map_err(|e| FieldError::new("config.ensemble", e.to_string()))?;
                let ds = res
                    .dataset(&j.dataset)
                    .map_err(|e| FieldError::new("config.dataset", e.to_string()))?;
                if ds.horizon() <= previous.observation_horizon {
                    return Err(FieldError::new(
                        "config.dataset",
                        format!(
                            "observations end on day {}, not after the previous horizon {}",
                            ds.horizon(),
                            previous.observation_horizon
                        ),
                    )
                    .into());
                }
            }
        }
        Ok(())
    }

    pub fn get(&self, id: &str) -> Result<JobRecord, ServiceError> {
        Ok(self.job(id)?.snapshot())
    }

    /// All jobs, oldest first.
    pub fn list(&self) -> Vec<JobRecord> {
        let jobs = self.inner.jobs.read().unwrap_or_else(|e| e.into_inner());
        let mut out: Vec<JobRecord> = jobs.values().map(|j| j.snapshot()).collect();
        out.sort_by(|a, b| a.created_at.cmp(&b.created_at).then(a.id.cmp(&b.id)));
        out
    }

    fn job(&self, id: &str) -> Result<Arc<Job>, ServiceError> {
        let jobs = self.inner.jobs.read().unwrap_or_else(|e| e.into_inner());
        jobs.get(id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(format!("no job {id}")))
    }

    /// Requests cooperative cancellation. A queued job fails at once; a
    /// running one stops at its next generation or day boundary.
    pub fn cancel(&self, id: &str) -> Result<JobRecord, ServiceError> {
        let job = self.job(id)?;
        let mut conflict = None;
        job.update(|rec| {
            if rec.status.is_finished() {
                conflict = Some(rec.status);
                return false;
            }
            job.cancel.store(true, Ordering::SeqCst);
            rec.cancel_requested = true;
            if rec.status == JobStatus::Queued {
                rec.status = JobStatus::Failed;
                rec.cancelled = true;
                rec.error = Some("cancelled before it started".into());
                rec.finished_at = Some(Utc::now());
            }
            true
        });
        if let Some(status) = conflict {
            let status = serde_json::to_value(status).expect("status serialises");
            return Err(ServiceError::Conflict(format!(
                "job {id} already finished with status {}",
                status.as_str().unwrap_or_default()
            )));
        }
        Ok(job.snapshot())
    }

    /// Counts of jobs per status, for the health endpoint.
    pub fn status_counts(&self) -> BTreeMap<&'static str, usize> {
        let mut counts: BTreeMap<&'static str, usize> = ["queued", "running", "done", "failed"]
            .into_iter()
            .map(|s| (s, 0))
            .collect();
        for rec in self.list() {
            let key = match rec.status {
                JobStatus::Queued => "queued",
                JobStatus::Running => "running",
                JobStatus::Done => "done",
                JobStatus::Failed => "failed",
            };
            *counts.get_mut(key).expect("all statuses counted") += 1;
        }
        counts
    }
}

/// Loads a persisted record. A job caught mid-run by a restart cannot be
/// resumed, so it is marked failed.
fn recover(path: &Path, default_seed: u64) -> Result<Job, String> {
    let bytes = std::fs::read(path).map_err(|e| e.to_string())?;
    let mut rec: JobRecord = serde_json::from_slice(&bytes).map_err(|e| e.to_string())?;
    let spec = JobSpec::parse(rec.kind, rec.config.clone(), default_seed)
        .map_err(|e| format!("{}: {}", e.path, e.message))?;
    if rec.status == JobStatus::Running {
        rec.status = JobStatus::Failed;
        rec.error = Some("interrupted: the service restarted while the job was running".into());
        rec.finished_at = Some(Utc::now());
        persist(path, &rec).map_err(|e| e.to_string())?;
    }
    Ok(Job {
        spec,
        cancel: AtomicBool::new(rec.cancel_requested),
        record: Mutex::new(rec),
        last_message_at: Mutex::new(Instant::now()),
        path: path.to_path_buf(),
    })
}

/// Runs queued jobs in submission order, one at a time, each with the
/// whole worker pool. Exits when the service is dropped.
fn dispatch(rx: Receiver<Arc<Job>>, shared: Arc<Shared>) {
    for job in rx {
        let mut start = false;
        job.update(|rec| {
            if rec.status != JobStatus::Queued {
                return false;
            }
            rec.status = JobStatus::Running;
            rec.started_at = Some(Utc::now());
            start = true;
            true
        });
        if !start {
            continue;
        }
        let res = Resources {
            datasets_dir: &shared.datasets_dir,
            store: &shared.store,
        };
        let result = shared.pool.install(|| {
            std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
                execute(&job.spec, &res, job.as_ref())
            }))
        });
        let result = result.unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "unknown panic".into());
            Err(Error::Numeric {
                message: format!("job panicked: {msg}"),
                residual: f64::NAN,
            })
        });
        finish(&job, &shared.store, result);
    }
}

fn finish(job: &Job, store: &ArtifactStore, result: epicontrol::Result<Outcome>) {
    // Artifacts go to disk before the record points at them.
    let stored = result.map(|outcome| {
        let links: std::io::Result<Vec<ArtifactLink>> = outcome
            .outputs
            .iter()
            .map(|o| {
                Ok(ArtifactLink {
                    name: o.name.to_string(),
                    reference: store.put(&o.bytes, o.media_type)?,
                    media_type: o.media_type.to_string(),
                    size: o.bytes.len() as u64,
                })
            })
            .collect();
        (outcome, links)
    });
    job.update(|rec| {
        rec.finished_at = Some(Utc::now());
        match stored {
            Ok((outcome, Ok(links))) => {
                rec.artifacts = links;
                rec.message = outcome.note.or(rec.message.take());
                if outcome.cancelled {
                    rec.status = JobStatus::Failed;
                    rec.cancelled = true;
                    rec.error = Some("cancelled".into());
                } else {
                    rec.status = JobStatus::Done;
                    rec.progress = 1.0;
                }
            }
            Ok((_, Err(e))) => {
                rec.status = JobStatus::Failed;
                rec.error = Some(format!("cannot store artifacts: {e}"));
            }
            Err(Error::Cancelled) => {
                rec.status = JobStatus::Failed;
                rec.cancelled = true;
                rec.error = Some("cancelled".into());
            }
            Err(e) => {
                rec.status = JobStatus::Failed;
                rec.error = Some(e.to_string());
            }
        }
        true
    });
    let rec = job.snapshot();
    log::info!(
        "job {} ({}) finished: {:?}",
        rec.id,
        rec.kind.name(),
        rec.status
    );
}
