//! Writes the synthetic England deaths and occupancy CSVs under `fixtures/`.
//!
//! The series are the model run at the England posterior means on the
//! approximate mobility fixture, with seeded Poisson and occupancy noise.
//! Run from the workspace root:
//!
//! ```text
//! cargo run -p epicontrol --example make_synthetic_health
//! ```

use std::fmt::Write as _;
use std::path::Path;

use epicontrol::abc::SimulatorRunner;
use epicontrol::data::{england_census, england_contacts, CountryPreset};
use epicontrol::dataset::{synthetic_observations, ObservationNoise};
use epicontrol::mobility::{build_mobility_series, parse_mobility_csv, PipelineConfig};
use epicontrol::model::{AgeGroup, EpidemicParameters, Simulator};

fn main() -> epicontrol::Result<()> {
    let preset = CountryPreset::england();
    let records = parse_mobility_csv(Path::new("fixtures/england_mobility_approx.csv"), "England")?;
    let (mobility, _) = build_mobility_series(&records, &PipelineConfig::default())?;
    let runner = SimulatorRunner {
        simulator: Simulator::new(england_contacts(), england_census())?,
        mobility,
        lockdown_start: preset.lockdown_day(),
    };
    let last = chrono::NaiveDate::from_ymd_opt(2020, 5, 23).unwrap();
    let horizon = preset.day_of(last) as usize + 1;
    let noise = ObservationNoise {
        seed: 2020,
        occupancy_sd: 0.05,
    };
    let obs = synthetic_observations(
        &runner,
        &EpidemicParameters::england_may_posterior_mean(),
        horizon,
        Some(noise),
    )?;

    let date = |t: usize| preset.epidemic_start + chrono::Days::new(t as u64 - 1);
    let mut deaths = String::from("date,age_band,count\n");
    let mut hosp = String::from("date,occupancy\n");
    for t in 1..=horizon {
        for g in AgeGroup::ALL {
            let c = obs.deaths[t - 1][g.index()];
            writeln!(deaths, "{},{},{}", date(t), g.label(), c).unwrap();
        }
        if let Some(h) = obs.hospitalised[t - 1] {
            writeln!(hosp, "{},{}", date(t), h).unwrap();
        }
    }
    std::fs::write("fixtures/england_deaths_synthetic.csv", deaths).unwrap();
    std::fs::write("fixtures/england_hospital_synthetic.csv", hosp).unwrap();
    println!("wrote {horizon} days");
    Ok(())
}
