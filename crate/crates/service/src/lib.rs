//! Job service for the epidemic control toolkit.
//!
//! Jobs (ingest, calibrate, simulate, optimize, nmpc, dynamic-update) are
//! submitted over HTTP, run one at a time on a shared worker pool, and
//! write their outputs to a content-addressed artifact store. Everything
//! lives in a plain data directory:
//!
//! ```text
//! <data-dir>/datasets/<name>/   dataset directories jobs can refer to by name
//! <data-dir>/jobs/<id>.json     job records
//! <data-dir>/artifacts/<sha256> artifact bytes, plus index.json
//! ```

pub mod api;
pub mod jobs;
pub mod run;
pub mod service;
pub mod store;

pub use api::router;
pub use jobs::{JobKind, JobRecord, JobStatus};
pub use service::{Service, ServiceConfig, ServiceError};
