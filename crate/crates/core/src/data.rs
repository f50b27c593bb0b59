//! Versioned plain-text input data: location contact matrices and census.
//!
//! Matrix files hold four named blocks (`[home]`, `[work]`, `[school]`,
//! `[other]`), each five rows of five whitespace-separated numbers. Census
//! files hold five numbers. `#` starts a comment; blank lines are ignored.

use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{ContactMatrix, ContactMatrixSet, PopulationCensus, AGE_GROUPS};

pub const ENGLAND_CONTACTS: &str = include_str!("../data/england_contacts.txt");
pub const ENGLAND_CENSUS: &str = include_str!("../data/england_census.txt");

const BLOCKS: [&str; 4] = ["home", "work", "school", "other"];

/// Hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("").trim();
        (!l.is_empty()).then_some((i + 1, l))
    })
}

fn parse_numbers(source: &str, line: usize, text: &str) -> Result<Vec<f64>> {
    text.split_whitespace()
        .map(|tok| {
            tok.parse::<f64>().map_err(|_| {
                Error::parse(format!("{source}:{line}"), format!("bad number {tok:?}"))
            })
        })
        .collect()
}

pub fn parse_contact_matrices(text: &str, source: &str) -> Result<ContactMatrixSet> {
    let mut blocks: Vec<(String, Vec<Vec<f64>>)> = Vec::new();
    for (line, l) in data_lines(text) {
        if let Some(name) = l.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            let name = name.trim().to_ascii_lowercase();
            if !BLOCKS.contains(&name.as_str()) {
                return Err(Error::parse(
                    format!("{source}:{line}"),
                    format!("unknown block [{name}]"),
                ));
            }
            if blocks.iter().any(|(n, _)| *n == name) {
                return Err(Error::parse(
                    format!("{source}:{line}"),
                    format!("duplicate block [{name}]"),
                ));
            }
            blocks.push((name, Vec::new()));
            continue;
        }
        let Some((_, rows)) = blocks.last_mut() else {
            return Err(Error::parse(
                format!("{source}:{line}"),
                "numbers before the first block header",
            ));
        };
        rows.push(parse_numbers(source, line, l)?);
    }
    let take = |name: &str| -> Result<ContactMatrix> {
        let (_, rows) = blocks
            .iter()
            .find(|(n, _)| n == name)
            .ok_or_else(|| Error::structural(format!("{source}: missing block [{name}]")))?;
        ContactMatrix::from_rows(rows)
            .map_err(|e| Error::structural(format!("{source}: block [{name}]: {e}")))
    };
    let set = ContactMatrixSet {
        home: take("home")?,
        work: take("work")?,
        school: take("school")?,
        other: take("other")?,
    };
    set.validate()?;
    Ok(set)
}

pub fn parse_census(text: &str, source: &str) -> Result<PopulationCensus> {
    let mut values = Vec::new();
    for (line, l) in data_lines(text) {
        values.extend(parse_numbers(source, line, l)?);
    }
    if values.len() != AGE_GROUPS {
        return Err(Error::structural(format!(
            "{source}: census needs {AGE_GROUPS} values, found {}",
            values.len()
        )));
    }
    let mut n = [0.0; AGE_GROUPS];
    n.copy_from_slice(&values);
    PopulationCensus::new(n)
}

pub fn write_contact_matrices(set: &ContactMatrixSet) -> String {
    let mut out = String::new();
    for (name, m) in [
        ("home", &set.home),
        ("work", &set.work),
        ("school", &set.school),
        ("other", &set.other),
    ] {
        out.push_str(&format!("[{name}]\n"));
        for row in &m.0 {
            let cells: Vec<String> = row.iter().map(|v| crate::format::sig12(*v)).collect();
            out.push_str(&cells.join(" "));
            out.push('\n');
        }
    }
    out
}

pub fn write_census(census: &PopulationCensus) -> String {
    census
        .0
        .iter()
        .map(|v| format!("{}\n", crate::format::sig12(*v)))
        .collect()
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Loads a matrix file, optionally verifying its SHA-256.
pub fn load_contact_matrices(path: &Path, checksum: Option<&str>) -> Result<ContactMatrixSet> {
    let text = read_text(path)?;
    verify_checksum(path, text.as_bytes(), checksum)?;
    parse_contact_matrices(&text, &path.display().to_string())
}

pub fn load_census(path: &Path, checksum: Option<&str>) -> Result<PopulationCensus> {
    let text = read_text(path)?;
    verify_checksum(path, text.as_bytes(), checksum)?;
    parse_census(&text, &path.display().to_string())
}

pub fn verify_checksum(path: &Path, bytes: &[u8], expected: Option<&str>) -> Result<()> {
    if let Some(expected) = expected {
        let got = sha256_hex(bytes);
        if !got.eq_ignore_ascii_case(expected.trim()) {
            return Err(Error::validation(format!(
                "checksum mismatch for {}: expected {expected}, got {got}",
                path.display()
            )));
        }
    }
    Ok(())
}

pub fn england_contacts() -> ContactMatrixSet {
    parse_contact_matrices(ENGLAND_CONTACTS, "england_contacts.txt")
        .expect("bundled England contact matrices parse")
}

pub fn england_census() -> PopulationCensus {
    parse_census(ENGLAND_CENSUS, "england_census.txt").expect("bundled England census parses")
}

/// Calendar anchors for a country.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountryPreset {
    pub name: String,
    pub epidemic_start: NaiveDate,
    pub lockdown_start: NaiveDate,
    pub school_closure: NaiveDate,
}

impl CountryPreset {
    pub fn england() -> Self {
        Self {
            name: "england".into(),
            epidemic_start: date(2020, 3, 1),
            lockdown_start: date(2020, 3, 18),
            school_closure: date(2020, 3, 23),
        }
    }

    pub fn france() -> Self {
        Self {
            name: "france".into(),
            epidemic_start: date(2020, 3, 1),
            lockdown_start: date(2020, 3, 18),
            school_closure: date(2020, 3, 16),
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "england" | "gb" | "uk" | "united kingdom" => Some(Self::england()),
            "france" | "fr" => Some(Self::france()),
            _ => None,
        }
    }

    /// Model day index of a calendar date.
    pub fn day_of(&self, d: NaiveDate) -> i64 {
        (d - self.epidemic_start).num_days()
    }

    pub fn lockdown_day(&self) -> usize {
        self.day_of(self.lockdown_start).max(0) as usize
    }
}

fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid date")
}


#[cfg(test)]
mod bundled {
    use super::*;
    use crate::mobility::MobilityLevels;
    use crate::model::{EpidemicParameters, Simulator};
    use crate::repro::reproduction_number;

    #[test]
    fn checksums_file_matches() {
        let listed = include_str!("../data/CHECKSUMS");
        for (name, text) in [
            ("england_contacts.txt", ENGLAND_CONTACTS),
            ("england_census.txt", ENGLAND_CENSUS),
        ] {
            let line = listed.lines().find(|l| l.ends_with(name)).unwrap();
            assert!(line.starts_with(&sha256_hex(text.as_bytes())), "{name}");
        }
    }

    #[test]
    fn england_reproduction_numbers() {
        let sim = Simulator::new(england_contacts(), england_census()).unwrap();
        let p = EpidemicParameters::england_may_posterior_mean();
        let pre = reproduction_number(&p, &sim.contacts.baseline(), &sim.census).unwrap();
        let lock = sim.lockdown_matrix(&p, &MobilityLevels::new(0.1, 0.4, 0.55));
        let during = reproduction_number(&p, &lock, &sim.census).unwrap();
        assert!(pre > 2.0 && pre < 3.0, "{pre}");
        assert!(during < 1.0 && during > 0.7, "{during}");
    }
}
