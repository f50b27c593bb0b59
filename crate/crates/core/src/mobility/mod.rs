//! Mobility and public-health data: ingestion, smoothing and aggregation
//! into the daily series consumed by simulation and calibration.

mod google;
mod health;
mod pipeline;
mod savgol;
mod series;

pub use google::{
    multiplier_to_percent, parse_mobility_csv, parse_mobility_reader, percent_to_multiplier,
    MobilityParseReport, RawMobilityRecord, CATEGORY_COLUMNS,
};
pub use health::{
    parse_health_csv, parse_health_readers, AgeBandMapping, HealthReport, ObservationSet,
};
pub use pipeline::{
    aggregate_other, build_mobility_series, school_mobility, PipelineConfig, PipelineReport,
    SchoolPolicy, OTHER_WEIGHTS, SCHOOL_CLOSED_LEVEL,
};
pub use savgol::savgol_smooth;
pub use series::{MobilityLevels, MobilitySeries, MOBILITY_CLAMP};
