//! Public-health observations: daily deaths by age band and hospital occupancy.
//!
//! Deaths CSV: `date,age_band,count`. Age bands are labels such as `0-19`,
//! `10-19`, `80+` or `85+`; each must fall inside one model group unless an
//! explicit mapping says otherwise. Hospital CSV: `date,occupancy`.
//!
//! Observation day `t >= 1` is the calendar date `epidemic_start + (t - 1)`,
//! i.e. the day ending at model time `t`.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::sig12;
use crate::model::{AgeGroup, AGE_GROUPS};

/// Observed daily deaths per group and total hospital occupancy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSet {
    /// `deaths[t - 1]` holds ΔD_obs_i(t).
    pub deaths: Vec<[f64; AGE_GROUPS]>,
    /// `hospitalised[t - 1]` holds I^C_obs_tot(t) where reported.
    pub hospitalised: Vec<Option<f64>>,
}

impl ObservationSet {
    pub fn new(deaths: Vec<[f64; AGE_GROUPS]>, hospitalised: Vec<Option<f64>>) -> Result<Self> {
        let obs = Self {
            deaths,
            hospitalised,
        };
        obs.validate()?;
        Ok(obs)
    }

    pub fn validate(&self) -> Result<()> {
        if self.deaths.len() != self.hospitalised.len() {
            return Err(Error::structural(format!(
                "deaths cover {} days but hospital series covers {}",
                self.deaths.len(),
                self.hospitalised.len()
            )));
        }
        for (k, row) in self.deaths.iter().enumerate() {
            if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::validation(format!(
                    "negative or non-finite deaths on day {}",
                    k + 1
                )));
            }
        }
        for (k, v) in self.hospitalised.iter().enumerate() {
            if let Some(v) = v {
                if !v.is_finite() || *v < 0.0 {
                    return Err(Error::validation(format!(
                        "negative or non-finite occupancy on day {}",
                        k + 1
                    )));
                }
            }
        }
        Ok(())
    }

    /// Last observed day `T`.
    pub fn horizon(&self) -> usize {
        self.deaths.len()
    }

    /// First day with a hospital value.
    pub fn hospital_first_day(&self) -> Option<usize> {
        self.hospitalised
            .iter()
            .position(Option::is_some)
            .map(|k| k + 1)
    }

    pub fn deaths_on(&self, t: usize) -> Option<&[f64; AGE_GROUPS]> {
        t.checked_sub(1).and_then(|k| self.deaths.get(k))
    }

    pub fn hospitalised_on(&self, t: usize) -> Option<f64> {
        t.checked_sub(1)
            .and_then(|k| self.hospitalised.get(k))
            .copied()
            .flatten()
    }

    /// Keeps days `1..=horizon`.
    pub fn truncated(&self, horizon: usize) -> ObservationSet {
        let h = horizon.min(self.horizon());
        ObservationSet {
            deaths: self.deaths[..h].to_vec(),
            hospitalised: self.hospitalised[..h].to_vec(),
        }
    }

    /// Canonical CSV: `day,deaths_1,...,deaths_5,hospitalised`; an empty last
    /// field marks a day without hospital data.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "day,deaths_1,deaths_2,deaths_3,deaths_4,deaths_5,hospitalised"
        )?;
        for (k, (d, h)) in self.deaths.iter().zip(&self.hospitalised).enumerate() {
            let cells: Vec<String> = d.iter().map(|v| sig12(*v)).collect();
            let h = h.map(sig12).unwrap_or_default();
            writeln!(w, "{},{},{}", k + 1, cells.join(","), h)?;
        }
        Ok(())
    }

    pub fn parse_csv(text: &str, source: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim().starts_with("day,deaths_1") => {}
            _ => {
                return Err(Error::parse(
                    format!("{source}:1"),
                    "bad observation header",
                ))
            }
        }
        let mut deaths = Vec::new();
        let mut hosp = Vec::new();
        for (idx, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let loc = || format!("{source}:{}", idx + 1);
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(Error::parse(loc(), "expected 7 fields"));
            }
            let day: usize = f[0]
                .trim()
                .parse()
                .map_err(|_| Error::parse(loc(), "bad day"))?;
            if day != deaths.len() + 1 {
                return Err(Error::parse(loc(), format!("day {day} out of sequence")));
            }
            let mut row = [0.0; AGE_GROUPS];
            for (slot, cell) in row.iter_mut().zip(&f[1..6]) {
                *slot = cell
                    .trim()
                    .parse()
                    .map_err(|_| Error::parse(loc(), format!("bad number {cell:?}")))?;
            }
            deaths.push(row);
            let h = f[6].trim();
            hosp.push(if h.is_empty() {
                None
            } else {
                Some(
                    h.parse()
                        .map_err(|_| Error::parse(loc(), format!("bad number {h:?}")))?,
                )
            });
        }
        ObservationSet::new(deaths, hosp)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
            .map_err(|e| Error::io(path, e))
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text, &path.display().to_string())
    }
}

/// Maps source age-band labels to model groups.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AgeBandMapping {
    /// Explicit label -> group (1-based) overrides.
    #[serde(default)]
    pub overrides: BTreeMap<String, usize>,
}

impl AgeBandMapping {
    pub fn group_of(&self, label: &str) -> Result<AgeGroup> {
        let label = label.trim();
        if let Some(g) = self.overrides.get(label) {
            return match g {
                1..=5 => Ok(AgeGroup::ALL[g - 1]),
                _ => Err(Error::validation(format!(
                    "age band {label:?} mapped to invalid group {g}"
                ))),
            };
        }
        let unmappable = || {
            Error::validation(format!(
                "age band {label:?} cannot be mapped to a model group"
            ))
        };
        let norm = label.replace(['_', ' '], "-").replace("to", "-");
        let (lo, hi) = if let Some(base) = norm.strip_suffix('+') {
            let lo: u32 = base.parse().map_err(|_| unmappable())?;
            (lo, None)
        } else {
            let (a, b) = norm.split_once('-').ok_or_else(unmappable)?;
            let lo: u32 = a.trim().parse().map_err(|_| unmappable())?;
            let hi: u32 = b.trim().parse().map_err(|_| unmappable())?;
            if hi < lo {
                return Err(unmappable());
            }
            (lo, Some(hi))
        };
        let group = AgeGroup::of_age(lo);
        match (hi, group.upper_age()) {
            (_, None) => Ok(group),
            (Some(h), Some(top)) if h <= top => Ok(group),
            _ => Err(unmappable()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HealthReport {
    pub death_rows: usize,
    pub hospital_rows: usize,
    /// Rows dated before the epidemic start.
    pub rows_before_start: usize,
}

pub fn parse_health_csv(
    deaths_path: &Path,
    hospital_path: &Path,
    mapping: &AgeBandMapping,
    epidemic_start: NaiveDate,
) -> Result<(ObservationSet, HealthReport)> {
    let d = std::fs::File::open(deaths_path).map_err(|e| Error::io(deaths_path, e))?;
    let h = std::fs::File::open(hospital_path).map_err(|e| Error::io(hospital_path, e))?;
    parse_health_readers(
        d,
        &deaths_path.display().to_string(),
        h,
        &hospital_path.display().to_string(),
        mapping,
        epidemic_start,
    )
}

pub fn parse_health_readers<R1: Read, R2: Read>(
    deaths: R1,
    deaths_source: &str,
    hospital: R2,
    hospital_source: &str,
    mapping: &AgeBandMapping,
    epidemic_start: NaiveDate,
) -> Result<(ObservationSet, HealthReport)> {
    let mut report = HealthReport::default();
    let day_of = |date: NaiveDate| (date - epidemic_start).num_days() + 1;

    let mut death_rows: Vec<(usize, AgeGroup, f64)> = Vec::new();
    let mut rdr = csv::Reader::from_reader(deaths);
    let headers = rdr
        .headers()
        .map_err(|e| Error::parse(format!("{deaths_source}:1"), e.to_string()))?
        .clone();
    let idx = |name: &str, src: &str, hs: &csv::StringRecord| {
        hs.iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::parse(format!("{src}:1"), format!("missing column {name}")))
    };
    let dc = idx("date", deaths_source, &headers)?;
    let bc = idx("age_band", deaths_source, &headers)?;
    let cc = idx("count", deaths_source, &headers)?;
    for (k, row) in rdr.records().enumerate() {
        let loc = || format!("{deaths_source}:{}", k + 2);
        let row = row.map_err(|e| Error::parse(loc(), e.to_string()))?;
        report.death_rows += 1;
        let date = parse_date(row.get(dc).unwrap_or(""), &loc)?;
        let group = mapping.group_of(row.get(bc).unwrap_or(""))?;
        let count: f64 = row
            .get(cc)
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|_| Error::parse(loc(), "bad count"))?;
        if !count.is_finite() || count < 0.0 {
            return Err(Error::validation(format!(
                "negative death count at {}",
                loc()
            )));
        }
        let t = day_of(date);
        if t < 1 {
            report.rows_before_start += 1;
            continue;
        }
        death_rows.push((t as usize, group, count));
    }

    let mut hosp_rows: Vec<(usize, f64)> = Vec::new();
    let mut rdr = csv::Reader::from_reader(hospital);
    let headers = rdr
        .headers()
        .map_err(|e| Error::parse(format!("{hospital_source}:1"), e.to_string()))?
        .clone();
    let dc = idx("date", hospital_source, &headers)?;
    let oc = idx("occupancy", hospital_source, &headers)?;
    for (k, row) in rdr.records().enumerate() {
        let loc = || format!("{hospital_source}:{}", k + 2);
        let row = row.map_err(|e| Error::parse(loc(), e.to_string()))?;
        report.hospital_rows += 1;
        let date = parse_date(row.get(dc).unwrap_or(""), &loc)?;
        let occ: f64 = row
            .get(oc)
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|_| Error::parse(loc(), "bad occupancy"))?;
        if !occ.is_finite() || occ < 0.0 {
            return Err(Error::validation(format!(
                "negative occupancy at {}",
                loc()
            )));
        }
        let t = day_of(date);
        if t < 1 {
            report.rows_before_start += 1;
            continue;
        }
        hosp_rows.push((t as usize, occ));
    }

    let horizon = death_rows
        .iter()
        .map(|r| r.0)
        .chain(hosp_rows.iter().map(|r| r.0))
        .max()
        .ok_or_else(|| Error::validation("no observations on or after the epidemic start"))?;
    let mut deaths = vec![[0.0; AGE_GROUPS]; horizon];
    for (t, g, c) in death_rows {
        deaths[t - 1][g.index()] += c;
    }
    let mut hospitalised = vec![None; horizon];
    for (t, occ) in hosp_rows {
        if hospitalised[t - 1].replace(occ).is_some() {
            return Err(Error::validation(format!(
                "duplicate hospital occupancy for day {t}"
            )));
        }
    }
    Ok((ObservationSet::new(deaths, hospitalised)?, report))
}

fn parse_date(s: &str, loc: &dyn Fn() -> String) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d")
        .map_err(|e| Error::parse(loc(), format!("bad date {s:?}: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn start() -> NaiveDate {
        NaiveDate::from_ymd_opt(2020, 3, 1).unwrap()
    }

    #[test]
    fn band_mapping() {
        let m = AgeBandMapping::default();
        assert_eq!(m.group_of("0-19").unwrap(), AgeGroup::Age0To19);
        assert_eq!(m.group_of("10-19").unwrap(), AgeGroup::Age0To19);
        assert_eq!(m.group_of("60-64").unwrap(), AgeGroup::Age60To79);
        assert_eq!(m.group_of("80+").unwrap(), AgeGroup::Age80Plus);
        assert_eq!(m.group_of("90+").unwrap(), AgeGroup::Age80Plus);
        assert_eq!(m.group_of("80-89").unwrap(), AgeGroup::Age80Plus);
        let err = m.group_of("15-24").unwrap_err();
        assert!(err.to_string().contains("15-24"));
        assert!(m.group_of("70+").is_err());
        assert!(m.group_of("unknown").is_err());
        let mut o = AgeBandMapping::default();
        o.overrides.insert("65+".into(), 4);
        assert_eq!(o.group_of("65+").unwrap(), AgeGroup::Age60To79);
    }

    #[test]
    fn single_band_file() {
        let deaths = "date,age_band,count\n2020-03-05,0-19,2\n";
        let hosp = "date,occupancy\n2020-03-05,10\n";
        let (obs, _) = parse_health_readers(
            deaths.as_bytes(),
            "d",
            hosp.as_bytes(),
            "h",
            &AgeBandMapping::default(),
            start(),
        )
        .unwrap();
        assert_eq!(obs.horizon(), 5);
        assert_eq!(obs.deaths[4], [2.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(obs.deaths[..4].iter().all(|r| r == &[0.0; 5]));
    }

    #[test]
    fn ten_year_bands_rebinned() {
        let mut deaths = String::from("date,age_band,count\n");
        let bands = [
            "0-9", "10-19", "20-29", "30-39", "40-49", "50-59", "60-69", "70-79", "80-89", "90+",
        ];
        let mut total = 0.0;
        for (k, b) in bands.iter().enumerate() {
            let c = (k + 1) as f64;
            total += c;
            deaths.push_str(&format!("2020-03-02,{b},{c}\n"));
        }
        let hosp = "date,occupancy\n";
        let (obs, _) = parse_health_readers(
            deaths.as_bytes(),
            "d",
            hosp.as_bytes(),
            "h",
            &AgeBandMapping::default(),
            start(),
        )
        .unwrap();
        assert_eq!(obs.deaths[1], [3.0, 7.0, 11.0, 15.0, 19.0]);
        let sum: f64 = obs.deaths.iter().flatten().sum();
        assert_eq!(sum, total);
    }

    #[test]
    fn hospital_start_recorded() {
        let deaths = "date,age_band,count\n2020-03-25,80+,1\n";
        let mut hosp = String::from("date,occupancy\n");
        for d in 18..=25 {
            hosp.push_str(&format!("2020-03-{d},{}\n", d * 10));
        }
        let (obs, _) = parse_health_readers(
            deaths.as_bytes(),
            "d",
            hosp.as_bytes(),
            "h",
            &AgeBandMapping::default(),
            start(),
        )
        .unwrap();
        assert_eq!(obs.hospital_first_day(), Some(18));
        assert!(obs.hospitalised[..17].iter().all(Option::is_none));
        assert_eq!(obs.hospitalised_on(18), Some(180.0));
    }

    #[test]
    fn negative_counts_rejected() {
        let deaths = "date,age_band,count\n2020-03-05,0-19,-2\n";
        let hosp = "date,occupancy\n";
        let err = parse_health_readers(
            deaths.as_bytes(),
            "d",
            hosp.as_bytes(),
            "h",
            &AgeBandMapping::default(),
            start(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn csv_round_trip() {
        let obs = ObservationSet::new(
            vec![[0.0, 1.0, 2.0, 3.0, 4.5], [1.0; 5]],
            vec![None, Some(12.25)],
        )
        .unwrap();
        let mut buf = Vec::new();
        obs.write_csv(&mut buf).unwrap();
        let back = ObservationSet::parse_csv(std::str::from_utf8(&buf).unwrap(), "m").unwrap();
        assert_eq!(back, obs);
    }
}
