use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::sig12;
use crate::mobility::MobilityLevels;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelBounds {
    pub lower: f64,
    pub upper: f64,
}

impl ChannelBounds {
    pub const fn new(lower: f64, upper: f64) -> Self {
        Self { lower, upper }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lower && v <= self.upper
    }

    pub fn clip(&self, v: f64) -> f64 {
        v.clamp(self.lower, self.upper)
    }
}

/// Admissible mobility per controlled channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlBounds {
    pub school: ChannelBounds,
    pub work: ChannelBounds,
    pub other: ChannelBounds,
}

impl Default for ControlBounds {
    fn default() -> Self {
        Self {
            school: ChannelBounds::new(0.1, 1.0),
            work: ChannelBounds::new(0.31, 1.0),
            other: ChannelBounds::new(0.41, 1.0),
        }
    }
}

impl ControlBounds {
    pub fn channels(&self) -> [ChannelBounds; 3] {
        [self.school, self.work, self.other]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, b) in [
            ("school", self.school),
            ("work", self.work),
            ("other", self.other),
        ] {
            if !(b.lower >= 0.0 && b.lower < b.upper && b.upper <= 1.0) {
                return Err(Error::validation(format!(
                    "bounds.{name}: need 0 <= lower < upper <= 1, got [{}, {}]",
                    b.lower, b.upper
                )));
            }
        }
        Ok(())
    }

    pub fn contains(&self, m: &MobilityLevels) -> bool {
        self.school.contains(m.school) && self.work.contains(m.work) && self.other.contains(m.other)
    }

    pub fn clip(&self, m: &MobilityLevels) -> MobilityLevels {
        MobilityLevels::new(
            self.school.clip(m.school),
            self.work.clip(m.work),
            self.other.clip(m.other),
        )
    }

    pub fn lower(&self) -> MobilityLevels {
        MobilityLevels::new(self.school.lower, self.work.lower, self.other.lower)
    }

    pub fn upper(&self) -> MobilityLevels {
        MobilityLevels::new(self.school.upper, self.work.upper, self.other.upper)
    }

    /// Box for a block-parametrised schedule, laid out as
    /// `[school blocks.., work blocks.., other blocks..]`.
    pub fn block_box(&self, blocks: usize) -> (Vec<f64>, Vec<f64>) {
        let mut lo = Vec::with_capacity(3 * blocks);
        let mut hi = Vec::with_capacity(3 * blocks);
        for b in self.channels() {
            lo.extend(std::iter::repeat_n(b.lower, blocks));
            hi.extend(std::iter::repeat_n(b.upper, blocks));
        }
        (lo, hi)
    }
}

/// Daily mobility for the controlled channels. Entry `k` applies over the
/// model interval `[start_day + k, start_day + k + 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSchedule {
    pub start_day: usize,
    pub days: Vec<MobilityLevels>,
}

/// Number of blocks of `block_len` days needed to cover `n_days`.
pub fn block_count(n_days: usize, block_len: usize) -> usize {
    n_days.div_ceil(block_len.max(1))
}

impl ControlSchedule {
    pub fn constant(start_day: usize, n_days: usize, m: MobilityLevels) -> Self {
        Self {
            start_day,
            days: vec![m; n_days],
        }
    }

    /// Expands a block vector laid out as in [`ControlBounds::block_box`].
    /// The last block may be shorter than `block_len`.
    pub fn from_blocks(
        start_day: usize,
        n_days: usize,
        block_len: usize,
        x: &[f64],
    ) -> Result<Self> {
        let blocks = block_count(n_days, block_len);
        if x.len() != 3 * blocks {
            return Err(Error::structural(format!(
                "{} decision variables for {blocks} blocks, expected {}",
                x.len(),
                3 * blocks
            )));
        }
        let days = (0..n_days)
            .map(|k| {
                let b = k / block_len.max(1);
                MobilityLevels::new(x[b], x[blocks + b], x[2 * blocks + b])
            })
            .collect();
        Ok(Self { start_day, days })
    }

    /// First-day value of every block; inverts [`from_blocks`](Self::from_blocks)
    /// for block-constant schedules.
    pub fn to_blocks(&self, block_len: usize) -> Vec<f64> {
        let block_len = block_len.max(1);
        let blocks = block_count(self.days.len(), block_len);
        let mut x = vec![0.0; 3 * blocks];
        for b in 0..blocks {
            let m = self.days[b * block_len];
            x[b] = m.school;
            x[blocks + b] = m.work;
            x[2 * blocks + b] = m.other;
        }
        x
    }

    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    pub fn end_day(&self) -> usize {
        self.start_day + self.days.len()
    }

    pub fn level(&self, day: usize) -> Option<MobilityLevels> {
        day.checked_sub(self.start_day)
            .and_then(|k| self.days.get(k))
            .copied()
    }

    pub fn respects(&self, bounds: &ControlBounds) -> bool {
        self.days.iter().all(|m| bounds.contains(m))
    }

    pub fn clipped(&self, bounds: &ControlBounds) -> Self {
        Self {
            start_day: self.start_day,
            days: self.days.iter().map(|m| bounds.clip(m)).collect(),
        }
    }

    /// `day,m_school,m_work,m_other`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "day,m_school,m_work,m_other")?;
        for (k, m) in self.days.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{}",
                self.start_day + k,
                sig12(m.school),
                sig12(m.work),
                sig12(m.other)
            )?;
        }
        Ok(())
    }

    pub fn parse_csv(text: &str, source: &str) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["day", "m_school", "m_work", "m_other"] {
            return Err(Error::parse(
                format!("{source}:1"),
                "expected header day,m_school,m_work,m_other",
            ));
        }
        let mut start = None;
        let mut days = Vec::new();
        for (k, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let loc = format!("{source}:{}", k + 2);
            let num = |i: usize| -> Result<f64> {
                rec.get(i)
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| {
                        Error::parse(loc.clone(), format!("bad value in column {}", i + 1))
                    })
            };
            let day: usize = rec
                .get(0)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::parse(loc.clone(), "bad day"))?;
            let s = *start.get_or_insert(day);
            if day != s + days.len() {
                return Err(Error::parse(loc, "days must be consecutive"));
            }
            days.push(MobilityLevels::new(num(1)?, num(2)?, num(3)?));
        }
        Ok(Self {
            start_day: start.unwrap_or(0),
            days,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blocks_round_trip() {
        let x = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];
        let s = ControlSchedule::from_blocks(40, 25, 10, &x).unwrap();
        assert_eq!(s.len(), 25);
        assert_eq!(s.level(40).unwrap(), MobilityLevels::new(0.1, 0.4, 0.7));
        assert_eq!(s.level(64).unwrap(), MobilityLevels::new(0.3, 0.6, 0.9));
        assert_eq!(s.level(65), None);
        assert_eq!(s.to_blocks(10), x.to_vec());
        assert!(ControlSchedule::from_blocks(0, 25, 10, &x[..6]).is_err());
    }

    #[test]
    fn bounds() {
        let b = ControlBounds::default();
        b.validate().unwrap();
        let s = ControlSchedule::constant(0, 3, MobilityLevels::new(0.0, 2.0, 0.5));
        assert!(!s.respects(&b));
        let c = s.clipped(&b);
        assert!(c.respects(&b));
        assert_eq!(c.days[0], MobilityLevels::new(0.1, 1.0, 0.5));
        let bad = ControlBounds {
            work: ChannelBounds::new(0.5, 0.4),
            ..b
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn csv_round_trip() {
        let s =
            ControlSchedule::from_blocks(7, 5, 2, &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9])
                .unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("day,m_school,m_work,m_other\n7,0.1,0.4,0.7\n"));
        assert_eq!(ControlSchedule::parse_csv(&text, "s").unwrap(), s);
    }
}
