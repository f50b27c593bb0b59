//! Age-structured SEI4RD dynamics.
//!
//! Eight compartments per age group: susceptible, exposed, two sub-clinical
//! infectious states (`I^SC1` heads to hospital, `I^SC2` recovers), two
//! clinical states (`I^C1` dies, `I^C2` recovers), recovered and deceased.
//! Hospitalised people are isolated and do not transmit.

mod contacts;
mod dynamics;
mod params;
mod simulate;
mod state;

pub use contacts::{AlphaMultipliers, ContactMatrix, ContactMatrixSet, PopulationCensus};
pub use dynamics::{derivative, initialize_state, rates, rk4_step, TransmissionKernel, SEED_SPLIT};
pub use params::{EpidemicParameters, PARAMETER_COUNT, PARAMETER_NAMES};
pub use simulate::{Simulator, Trajectory, DEFAULT_STEPS_PER_DAY};
pub use state::{CompartmentState, COMPARTMENT_NAMES};

/// Number of age groups.
pub const AGE_GROUPS: usize = 5;

/// The five age bands, youngest first. Index 0 is group 1 (0-19).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AgeGroup {
    Age0To19,
    Age20To39,
    Age40To59,
    Age60To79,
    Age80Plus,
}

impl AgeGroup {
    pub const ALL: [AgeGroup; AGE_GROUPS] = [
        AgeGroup::Age0To19,
        AgeGroup::Age20To39,
        AgeGroup::Age40To59,
        AgeGroup::Age60To79,
        AgeGroup::Age80Plus,
    ];

    /// Zero-based index into per-group arrays.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            AgeGroup::Age0To19 => "0-19",
            AgeGroup::Age20To39 => "20-39",
            AgeGroup::Age40To59 => "40-59",
            AgeGroup::Age60To79 => "60-79",
            AgeGroup::Age80Plus => "80+",
        }
    }

    /// Lower bound of the band in years.
    pub fn lower_age(self) -> u32 {
        20 * self as u32
    }

    /// Inclusive upper bound, `None` for the open top band.
    pub fn upper_age(self) -> Option<u32> {
        match self {
            AgeGroup::Age80Plus => None,
            g => Some(20 * g as u32 + 19),
        }
    }

    /// Group containing a given age in years.
    pub fn of_age(age: u32) -> AgeGroup {
        AgeGroup::ALL[(age / 20).min(4) as usize]
    }
}
