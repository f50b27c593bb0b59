//! Epidemic control toolkit.
//!
//! An age-structured SEI4RD model whose contact matrices follow mobility
//! data, calibrated by population Monte Carlo ABC, with a receding-horizon
//! lockdown optimiser that minimises expected sanitary and economic cost
//! over posterior draws.

pub mod abc;
pub mod control;
pub mod data;
pub mod dataset;
pub mod error;
pub mod format;
pub mod mobility;
pub mod model;
pub mod monitor;
pub mod repro;
pub mod rng;

pub use error::{Error, Result};
