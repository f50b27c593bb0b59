//! Google community mobility report ingestion.
//!
//! Expected columns (extra columns are ignored):
//!
//! | column | meaning |
//! |---|---|
//! | `country_region_code`, `country_region` | country |
//! | `sub_region_1`, `sub_region_2`, `metro_area` | sub-national keys, empty for national rows |
//! | `date` | ISO-8601 day |
//! | `retail_and_recreation_percent_change_from_baseline` | |
//! | `grocery_and_pharmacy_percent_change_from_baseline` | |
//! | `parks_percent_change_from_baseline` | |
//! | `transit_stations_percent_change_from_baseline` | |
//! | `workplaces_percent_change_from_baseline` | |
//! | `residential_percent_change_from_baseline` | |
//!
//! Percent changes become multipliers `m = 1 + pct / 100`; empty cells are
//! kept as missing values.

use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CATEGORY_COLUMNS: [&str; 6] = [
    "retail_and_recreation_percent_change_from_baseline",
    "grocery_and_pharmacy_percent_change_from_baseline",
    "parks_percent_change_from_baseline",
    "transit_stations_percent_change_from_baseline",
    "workplaces_percent_change_from_baseline",
    "residential_percent_change_from_baseline",
];

/// One day of mobility for one region, as multipliers of the baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawMobilityRecord {
    pub date: NaiveDate,
    pub retail: Option<f64>,
    pub grocery: Option<f64>,
    pub parks: Option<f64>,
    pub transit: Option<f64>,
    pub workplaces: Option<f64>,
    pub residential: Option<f64>,
}

pub fn percent_to_multiplier(pct: f64) -> f64 {
    1.0 + pct / 100.0
}

pub fn multiplier_to_percent(m: f64) -> f64 {
    (m - 1.0) * 100.0
}

/// Summary of what a parse kept and dropped.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MobilityParseReport {
    pub rows_read: usize,
    pub rows_matched: usize,
    pub rows_dropped: usize,
}

pub fn parse_mobility_csv(path: &Path, region: &str) -> Result<Vec<RawMobilityRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_mobility_reader(file, region, &path.display().to_string()).map(|(r, _)| r)
}

pub fn parse_mobility_reader<R: Read>(
    reader: R,
    region: &str,
    source: &str,
) -> Result<(Vec<RawMobilityRecord>, MobilityParseReport)> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(false)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::parse(format!("{source}:1"), e.to_string()))?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let required = |name: &str| {
        col(name)
            .ok_or_else(|| Error::parse(format!("{source}:1"), format!("missing column {name}")))
    };
    let country = required("country_region")?;
    let country_code = col("country_region_code");
    let sub1 = col("sub_region_1");
    let sub2 = col("sub_region_2");
    let metro = col("metro_area");
    let date_col = required("date")?;
    let mut cats = [0usize; 6];
    for (slot, name) in cats.iter_mut().zip(CATEGORY_COLUMNS) {
        *slot = required(name)?;
    }

    let mut report = MobilityParseReport::default();
    let mut out = Vec::new();
    for (idx, row) in rdr.records().enumerate() {
        let line = idx + 2;
        let loc = || format!("{source}:{line}");
        let row = row.map_err(|e| Error::parse(loc(), e.to_string()))?;
        report.rows_read += 1;
        let get = |c: Option<usize>| c.and_then(|c| row.get(c)).unwrap_or("").trim();
        let s1 = get(sub1);
        let s2 = get(sub2);
        let national = s1.is_empty() && s2.is_empty() && get(metro).is_empty();
        let matches = (national && (get(Some(country)) == region || get(country_code) == region))
            || (s1 == region && s2.is_empty());
        if !matches {
            report.rows_dropped += 1;
            continue;
        }
        report.rows_matched += 1;
        let date = NaiveDate::parse_from_str(get(Some(date_col)), "%Y-%m-%d")
            .map_err(|e| Error::parse(loc(), format!("bad date {:?}: {e}", get(Some(date_col)))))?;
        let mut vals = [None; 6];
        for (v, c) in vals.iter_mut().zip(cats) {
            let cell = get(Some(c));
            if cell.is_empty() {
                continue;
            }
            let pct: f64 = cell
                .parse()
                .map_err(|_| Error::parse(loc(), format!("bad percentage {cell:?}")))?;
            if !pct.is_finite() {
                return Err(Error::parse(
                    loc(),
                    format!("non-finite percentage {cell:?}"),
                ));
            }
            *v = Some(percent_to_multiplier(pct));
        }
        out.push(RawMobilityRecord {
            date,
            retail: vals[0],
            grocery: vals[1],
            parks: vals[2],
            transit: vals[3],
            workplaces: vals[4],
            residential: vals[5],
        });
    }
    if out.is_empty() {
        return Err(Error::validation(format!(
            "no mobility rows match region {region:?}"
        )));
    }
    out.sort_by_key(|r| r.date);
    if let Some(w) = out.windows(2).find(|w| w[0].date == w[1].date) {
        return Err(Error::validation(format!(
            "duplicate mobility rows for {} in region {region:?}",
            w[0].date
        )));
    }
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "country_region_code,country_region,sub_region_1,sub_region_2,metro_area,date,retail_and_recreation_percent_change_from_baseline,grocery_and_pharmacy_percent_change_from_baseline,parks_percent_change_from_baseline,transit_stations_percent_change_from_baseline,workplaces_percent_change_from_baseline,residential_percent_change_from_baseline";

    #[test]
    fn conversion() {
        assert_eq!(percent_to_multiplier(0.0), 1.0);
        assert!((percent_to_multiplier(-69.0) - 0.31).abs() < 1e-15);
        assert!((percent_to_multiplier(25.0) - 1.25).abs() < 1e-15);
    }

    #[test]
    fn filters_region_and_converts() {
        let csv = format!(
            "{HEADER}\n\
             GB,United Kingdom,,,,2020-03-02,0,-5,20,-10,-69,3\n\
             GB,United Kingdom,Greater London,,,2020-03-02,-1,-1,-1,-1,-1,-1\n\
             FR,France,,,,2020-03-02,1,1,1,1,1,1\n\
             GB,United Kingdom,,,,2020-03-01,,-5,20,-10,-60,3\n"
        );
        let (recs, rep) = parse_mobility_reader(csv.as_bytes(), "United Kingdom", "t").unwrap();
        assert_eq!(rep.rows_read, 4);
        assert_eq!(rep.rows_matched, 2);
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].date, NaiveDate::from_ymd_opt(2020, 3, 1).unwrap());
        assert_eq!(recs[0].retail, None);
        assert!((recs[1].workplaces.unwrap() - 0.31).abs() < 1e-12);
        assert_eq!(recs[1].retail, Some(1.0));

        let (sub, _) = parse_mobility_reader(csv.as_bytes(), "Greater London", "t").unwrap();
        assert_eq!(sub.len(), 1);
        let (code, _) = parse_mobility_reader(csv.as_bytes(), "FR", "t").unwrap();
        assert_eq!(code.len(), 1);
    }

    #[test]
    fn errors() {
        let csv = format!("{HEADER}\nGB,United Kingdom,,,,2020-03-02,0,0,0,0,abc,0\n");
        let err = parse_mobility_reader(csv.as_bytes(), "United Kingdom", "f.csv").unwrap_err();
        assert!(err.to_string().contains("f.csv:2"), "{err}");

        let csv = format!("{HEADER}\nGB,United Kingdom,,,,2020-03-02,0,0,0,0,0,0\n");
        let err = parse_mobility_reader(csv.as_bytes(), "Narnia", "f.csv").unwrap_err();
        assert!(err.to_string().contains("Narnia"));

        let csv = format!(
            "{HEADER}\nGB,United Kingdom,,,,2020-03-02,0,0,0,0,0,0\nGB,United Kingdom,,,,2020-03-02,0,0,0,0,0,0\n"
        );
        assert!(parse_mobility_reader(csv.as_bytes(), "GB", "f").is_err());
    }
}
