use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::google::RawMobilityRecord;
use super::savgol::savgol_smooth;
use super::series::{MobilityLevels, MobilitySeries, MOBILITY_CLAMP};
use crate::error::{Error, Result};

/// Weights of parks, retail, transit and grocery in `m_other`.
pub const OTHER_WEIGHTS: [f64; 4] = [0.1, 0.3, 0.3, 0.3];

/// School mobility once schools have closed.
pub const SCHOOL_CLOSED_LEVEL: f64 = 0.1;

pub fn aggregate_other(parks: f64, retail: f64, transit: f64, grocery: f64) -> f64 {
    OTHER_WEIGHTS[0] * parks
        + OTHER_WEIGHTS[1] * retail
        + OTHER_WEIGHTS[2] * transit
        + OTHER_WEIGHTS[3] * grocery
}

/// When schools close (and optionally reopen) in historical mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchoolPolicy {
    pub closure: NaiveDate,
    #[serde(default)]
    pub reopen: Option<NaiveDate>,
}

impl SchoolPolicy {
    pub fn closing(closure: NaiveDate) -> Self {
        Self {
            closure,
            reopen: None,
        }
    }

    pub fn england() -> Self {
        Self::closing(NaiveDate::from_ymd_opt(2020, 3, 23).expect("valid date"))
    }

    pub fn france() -> Self {
        Self::closing(NaiveDate::from_ymd_opt(2020, 3, 16).expect("valid date"))
    }
}

pub fn school_mobility(date: NaiveDate, policy: &SchoolPolicy) -> f64 {
    let reopened = policy.reopen.is_some_and(|r| date >= r);
    if date >= policy.closure && !reopened {
        SCHOOL_CLOSED_LEVEL
    } else {
        1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Day 0 of every series.
    pub epidemic_start: NaiveDate,
    pub school: SchoolPolicy,
    pub window: usize,
    pub poly_order: usize,
    /// Longest run of consecutive missing days bridged by interpolation.
    pub max_gap: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            epidemic_start: NaiveDate::from_ymd_opt(2020, 3, 1).expect("valid date"),
            school: SchoolPolicy::england(),
            window: 15,
            poly_order: 2,
            max_gap: 3,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub days: usize,
    /// Missing (category, day) cells filled by interpolation.
    pub interpolated: usize,
    /// Values pulled back inside the clamp range.
    pub clamped: usize,
    /// Days before the epidemic start used only as smoothing context.
    pub context_days: usize,
}

/// Smoothed, aggregated, clamped daily mobility from raw records.
pub fn build_mobility_series(
    records: &[RawMobilityRecord],
    config: &PipelineConfig,
) -> Result<(MobilitySeries, PipelineReport)> {
    if records.is_empty() {
        return Err(Error::validation("no mobility records"));
    }
    let mut sorted = records.to_vec();
    sorted.sort_by_key(|r| r.date);
    if let Some(w) = sorted.windows(2).find(|w| w[0].date == w[1].date) {
        return Err(Error::validation(format!(
            "duplicate mobility date {}",
            w[0].date
        )));
    }
    let first = sorted[0].date;
    let last = sorted[sorted.len() - 1].date;
    let n = (last - first).num_days() as usize + 1;
    let mut report = PipelineReport::default();

    let mut grids: [Vec<Option<f64>>; 5] = std::array::from_fn(|_| vec![None; n]);
    for r in &sorted {
        let k = (r.date - first).num_days() as usize;
        for (g, v) in grids
            .iter_mut()
            .zip([r.workplaces, r.parks, r.retail, r.transit, r.grocery])
        {
            g[k] = v;
        }
    }
    let names = ["workplaces", "parks", "retail", "transit", "grocery"];
    let mut filled = Vec::with_capacity(5);
    for (g, name) in grids.iter().zip(names) {
        let (vals, count) = fill_gaps(g, first, config.max_gap, name)?;
        report.interpolated += count;
        filled.push(vals);
    }
    let smoothed: Vec<Vec<f64>> = filled
        .iter()
        .map(|v| savgol_smooth(v, config.window, config.poly_order))
        .collect::<Result<_>>()?;

    let start_offset = (first - config.epidemic_start).num_days();
    let skip = if start_offset < 0 {
        (-start_offset) as usize
    } else {
        0
    };
    if skip >= n {
        return Err(Error::validation(format!(
            "mobility data ends {last}, before epidemic start {}",
            config.epidemic_start
        )));
    }
    report.context_days = skip;

    let clamp = |v: f64, count: &mut usize| {
        let c = v.clamp(MOBILITY_CLAMP.0, MOBILITY_CLAMP.1);
        if c != v {
            *count += 1;
        }
        c
    };
    let mut levels = Vec::with_capacity(n - skip);
    for k in skip..n {
        let date = first + chrono::Days::new(k as u64);
        let work = clamp(smoothed[0][k], &mut report.clamped);
        let other = clamp(
            aggregate_other(
                smoothed[1][k],
                smoothed[2][k],
                smoothed[3][k],
                smoothed[4][k],
            ),
            &mut report.clamped,
        );
        levels.push(MobilityLevels {
            school: school_mobility(date, &config.school),
            work,
            other,
        });
    }
    report.days = levels.len();
    let start_day = start_offset.max(0) as usize;
    Ok((MobilitySeries::new(start_day, levels), report))
}

/// Linear interpolation across interior gaps of at most `max_gap` days.
fn fill_gaps(
    values: &[Option<f64>],
    first: NaiveDate,
    max_gap: usize,
    name: &str,
) -> Result<(Vec<f64>, usize)> {
    let date_of = |k: usize| first + chrono::Days::new(k as u64);
    let mut out = vec![0.0; values.len()];
    let mut filled = 0;
    let mut k = 0;
    while k < values.len() {
        if let Some(v) = values[k] {
            out[k] = v;
            k += 1;
            continue;
        }
        let gap_start = k;
        while k < values.len() && values[k].is_none() {
            k += 1;
        }
        let gap_len = k - gap_start;
        let dates: Vec<String> = (gap_start..k).map(|d| date_of(d).to_string()).collect();
        if gap_start == 0 || k == values.len() {
            return Err(Error::validation(format!(
                "{name} mobility missing at series edge on {}",
                dates.join(", ")
            )));
        }
        if gap_len > max_gap {
            return Err(Error::validation(format!(
                "{name} mobility gap of {gap_len} days exceeds {max_gap}: {}",
                dates.join(", ")
            )));
        }
        let left = out[gap_start - 1];
        let right = values[k].expect("gap ends on a present value");
        for (j, slot) in out[gap_start..k].iter_mut().enumerate() {
            let f = (j + 1) as f64 / (gap_len + 1) as f64;
            *slot = left + f * (right - left);
        }
        filled += gap_len;
    }
    Ok((out, filled))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn date(m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2020, m, d).unwrap()
    }

    fn record(date: NaiveDate, v: f64) -> RawMobilityRecord {
        RawMobilityRecord {
            date,
            retail: Some(v),
            grocery: Some(v),
            parks: Some(v),
            transit: Some(v),
            workplaces: Some(v),
            residential: Some(1.0),
        }
    }

    #[test]
    fn other_weights() {
        assert!((aggregate_other(1.0, 1.0, 1.0, 1.0) - 1.0).abs() < 1e-15);
        assert!((aggregate_other(1.0, 0.5, 0.5, 0.5) - 0.55).abs() < 1e-15);
        assert_eq!(aggregate_other(0.0, 0.0, 0.0, 0.0), 0.0);
    }

    #[test]
    fn school_levels() {
        let p = SchoolPolicy::england();
        assert_eq!(school_mobility(date(3, 22), &p), 1.0);
        assert_eq!(school_mobility(date(3, 23), &p), 0.1);
        assert_eq!(school_mobility(date(5, 1), &p), 0.1);
        assert_eq!(school_mobility(date(3, 16), &SchoolPolicy::france()), 0.1);
        let reopen = SchoolPolicy {
            closure: date(3, 23),
            reopen: Some(date(9, 1)),
        };
        assert_eq!(school_mobility(date(9, 1), &reopen), 1.0);
    }

    #[test]
    fn interpolates_short_gap() {
        let mut recs: Vec<_> = (0..30u64)
            .map(|k| record(date(2, 20) + chrono::Days::new(k), 0.8))
            .collect();
        recs.drain(10..13);
        let (series, report) = build_mobility_series(&recs, &PipelineConfig::default()).unwrap();
        assert_eq!(report.interpolated, 15);
        assert_eq!(report.context_days, 10);
        assert_eq!(series.start_day, 0);
        assert_eq!(series.levels.len(), 20);
        assert!(series.levels.iter().all(|l| (l.work - 0.8).abs() < 1e-12));
    }

    #[test]
    fn long_gap_names_dates() {
        let mut recs: Vec<_> = (0..30u64)
            .map(|k| record(date(3, 1) + chrono::Days::new(k), 0.8))
            .collect();
        recs.drain(10..15);
        let err = build_mobility_series(&recs, &PipelineConfig::default()).unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("2020-03-11") && msg.contains("2020-03-15"),
            "{msg}"
        );
    }

    #[test]
    fn spikes_are_clamped() {
        let recs: Vec<_> = (0..30u64)
            .map(|k| record(date(3, 1) + chrono::Days::new(k), 2.4))
            .collect();
        let (series, report) = build_mobility_series(&recs, &PipelineConfig::default()).unwrap();
        assert!(report.clamped > 0);
        assert!(series
            .levels
            .iter()
            .all(|l| l.work <= 1.5 && l.other <= 1.5));
    }
}
