use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::sig12;

/// Lower and upper clamp applied to every mobility multiplier.
pub const MOBILITY_CLAMP: (f64, f64) = (0.0, 1.5);

/// Mobility multipliers for one day (1.0 = pre-pandemic baseline).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MobilityLevels {
    pub school: f64,
    pub work: f64,
    pub other: f64,
}

impl MobilityLevels {
    pub const BASELINE: MobilityLevels = MobilityLevels {
        school: 1.0,
        work: 1.0,
        other: 1.0,
    };

    pub fn new(school: f64, work: f64, other: f64) -> Self {
        Self {
            school,
            work,
            other,
        }
    }

    pub fn clamped(self) -> Self {
        let c = |v: f64| v.clamp(MOBILITY_CLAMP.0, MOBILITY_CLAMP.1);
        Self {
            school: c(self.school),
            work: c(self.work),
            other: c(self.other),
        }
    }
}

/// Gap-free daily mobility, indexed by day offset from the epidemic start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MobilitySeries {
    pub start_day: usize,
    pub levels: Vec<MobilityLevels>,
}

impl MobilitySeries {
    pub fn new(start_day: usize, levels: Vec<MobilityLevels>) -> Self {
        Self { start_day, levels }
    }

    /// Same levels every day in `[start_day, end_day)`.
    pub fn constant(start_day: usize, end_day: usize, levels: MobilityLevels) -> Self {
        Self {
            start_day,
            levels: vec![levels; end_day.saturating_sub(start_day)],
        }
    }

    /// One past the last covered day.
    pub fn end_day(&self) -> usize {
        self.start_day + self.levels.len()
    }

    pub fn get(&self, day: usize) -> Option<MobilityLevels> {
        day.checked_sub(self.start_day)
            .and_then(|k| self.levels.get(k))
            .copied()
    }

    /// Days of `[from, to)` not covered by the series.
    pub fn missing_days(&self, from: usize, to: usize) -> Vec<usize> {
        (from..to).filter(|d| self.get(*d).is_none()).collect()
    }

    /// Copy of `self` overridden by `other` on every day `other` covers.
    /// The two must overlap or touch.
    pub fn overlay(&self, other: &MobilitySeries) -> Result<MobilitySeries> {
        if other.levels.is_empty() {
            return Ok(self.clone());
        }
        let start = self.start_day.min(other.start_day);
        let end = self.end_day().max(other.end_day());
        let mut levels = Vec::with_capacity(end - start);
        for day in start..end {
            let v = other
                .get(day)
                .or_else(|| self.get(day))
                .ok_or_else(|| Error::validation(format!("overlay leaves day {day} uncovered")))?;
            levels.push(v);
        }
        Ok(MobilitySeries::new(start, levels))
    }

    /// Canonical CSV: `day,m_work,m_school,m_other` with `%.12g` values.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "day,m_work,m_school,m_other")?;
        for (k, l) in self.levels.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{}",
                self.start_day + k,
                sig12(l.work),
                sig12(l.school),
                sig12(l.other)
            )?;
        }
        Ok(())
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

    pub fn parse_csv(text: &str, source: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == "day,m_work,m_school,m_other" => {}
            _ => {
                return Err(Error::parse(
                    format!("{source}:1"),
                    "expected header day,m_work,m_school,m_other",
                ))
            }
        }
        let mut start = None;
        let mut levels = Vec::new();
        for (idx, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let loc = || format!("{source}:{}", idx + 1);
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 4 {
                return Err(Error::parse(loc(), "expected 4 fields"));
            }
            let day: usize = fields[0]
                .trim()
                .parse()
                .map_err(|_| Error::parse(loc(), "bad day"))?;
            let num = |s: &str| -> Result<f64> {
                s.trim()
                    .parse()
                    .map_err(|_| Error::parse(loc(), format!("bad number {s:?}")))
            };
            let expected = start.map(|s: usize| s + levels.len()).unwrap_or(day);
            if day != expected {
                return Err(Error::parse(
                    loc(),
                    format!("day {day} out of sequence, expected {expected}"),
                ));
            }
            start.get_or_insert(day);
            levels.push(MobilityLevels {
                work: num(fields[1])?,
                school: num(fields[2])?,
                other: num(fields[3])?,
            });
        }
        Ok(MobilitySeries::new(start.unwrap_or(0), levels))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let s = MobilitySeries::new(
            17,
            vec![
                MobilityLevels::new(1.0, 0.31, 0.55),
                MobilityLevels::new(0.1, 1.0 / 3.0, 0.41),
            ],
        );
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "day,m_work,m_school,m_other\n17,0.31,1,0.55\n18,0.333333333333,0.1,0.41\n"
        );
        let back = MobilitySeries::parse_csv(&text, "mem").unwrap();
        assert_eq!(back.start_day, 17);
        assert_eq!(back.levels[0], s.levels[0]);
    }

    #[test]
    fn missing_and_overlay() {
        let s = MobilitySeries::constant(0, 10, MobilityLevels::BASELINE);
        assert_eq!(s.missing_days(8, 12), vec![10, 11]);
        let o = MobilitySeries::constant(8, 12, MobilityLevels::new(0.1, 0.2, 0.3));
        let m = s.overlay(&o).unwrap();
        assert_eq!(m.end_day(), 12);
        assert_eq!(m.get(3), Some(MobilityLevels::BASELINE));
        assert_eq!(m.get(9).unwrap().work, 0.2);
    }

    #[test]
    fn out_of_sequence_rejected() {
        let text = "day,m_work,m_school,m_other\n0,1,1,1\n2,1,1,1\n";
        assert!(MobilitySeries::parse_csv(text, "x").is_err());
    }
}
