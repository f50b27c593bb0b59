//! Progress reporting and cooperative cancellation for long runs.

use std::sync::atomic::{AtomicBool, Ordering};

/// Observer of a long-running computation. Implementations must be cheap:
/// they are polled between generations, days and batches.
pub trait Monitor: Sync {
    fn is_cancelled(&self) -> bool {
        false
    }

    /// `fraction` in `[0, 1]` of the current stage.
    fn progress(&self, _fraction: f64, _message: &str) {}
}

/// Ignores everything.
#[derive(Debug, Default, Clone, Copy)]
pub struct Silent;

impl Monitor for Silent {}

/// Cancellation flag with no progress sink.
#[derive(Debug, Default)]
pub struct CancelFlag(pub AtomicBool);

impl CancelFlag {
    pub fn cancel(&self) {
        self.0.store(true, Ordering::SeqCst);
    }
}

impl Monitor for CancelFlag {
    fn is_cancelled(&self) -> bool {
        self.0.load(Ordering::SeqCst)
    }
}

/// Maps a sub-stage's `[0, 1]` progress into `[start, end]` of a parent.
pub struct Scaled<'a> {
    pub inner: &'a dyn Monitor,
    pub start: f64,
    pub end: f64,
}

impl Monitor for Scaled<'_> {
    fn is_cancelled(&self) -> bool {
        self.inner.is_cancelled()
    }

    fn progress(&self, fraction: f64, message: &str) {
        let f = fraction.clamp(0.0, 1.0);
        self.inner
            .progress(self.start + (self.end - self.start) * f, message);
    }
}

/// Prepends a label to every progress message.
pub struct Prefixed<'a> {
    pub inner: &'a dyn Monitor,
    pub prefix: String,
}

impl Monitor for Prefixed<'_> {
    fn is_cancelled(&self) -> bool {
        self.inner.is_cancelled()
    }

    fn progress(&self, fraction: f64, message: &str) {
        self.inner
            .progress(fraction, &format!("{}: {message}", self.prefix));
    }
}
