use serde::{Deserialize, Serialize};

use super::AGE_GROUPS;
use crate::error::{Error, Result};

/// Mean daily contacts: entry `(i, j)` is the number of people of group `j`
/// that one person of group `i` meets per day. Not symmetric in general.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ContactMatrix(pub [[f64; AGE_GROUPS]; AGE_GROUPS]);

impl ContactMatrix {
    pub fn zeros() -> Self {
        Self::default()
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.len() != AGE_GROUPS || rows.iter().any(|r| r.len() != AGE_GROUPS) {
            return Err(Error::structural(format!(
                "contact matrix must be {AGE_GROUPS}x{AGE_GROUPS}"
            )));
        }
        let mut m = [[0.0; AGE_GROUPS]; AGE_GROUPS];
        for (dst, src) in m.iter_mut().zip(rows) {
            dst.copy_from_slice(src);
        }
        let out = Self(m);
        out.validate()?;
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, row) in self.0.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                if !v.is_finite() || *v < 0.0 {
                    return Err(Error::validation(format!(
                        "contact entry ({}, {}) = {v} must be finite and >= 0",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[i][j]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.0.iter().map(|r| r.to_vec()).collect()
    }

    pub fn add(&self, other: &ContactMatrix) -> ContactMatrix {
        let mut out = *self;
        for (r, o) in out.0.iter_mut().zip(&other.0) {
            for (a, b) in r.iter_mut().zip(o) {
                *a += b;
            }
        }
        out
    }
}

/// Per-group multipliers of each location matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaMultipliers {
    pub home: [f64; AGE_GROUPS],
    pub work: [f64; AGE_GROUPS],
    pub school: [f64; AGE_GROUPS],
    pub other: [f64; AGE_GROUPS],
}

impl AlphaMultipliers {
    /// No reduction anywhere.
    pub fn baseline() -> Self {
        Self {
            home: [1.0; AGE_GROUPS],
            work: [1.0; AGE_GROUPS],
            school: [1.0; AGE_GROUPS],
            other: [1.0; AGE_GROUPS],
        }
    }

    /// Multipliers driven by mobility: groups 1-3 scale with
    /// `alpha_123 * m`, groups 4 and 5 use their constant reductions for all
    /// non-home locations, and home contacts never change.
    pub fn from_mobility(
        m_school: f64,
        m_work: f64,
        m_other: f64,
        alpha_123: f64,
        alpha_4: f64,
        alpha_5: f64,
    ) -> Self {
        let young = |m: f64| {
            let v = alpha_123 * m;
            [v, v, v, alpha_4, alpha_5]
        };
        Self {
            home: [1.0; AGE_GROUPS],
            work: young(m_work),
            school: young(m_school),
            other: young(m_other),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("home", &self.home),
            ("work", &self.work),
            ("school", &self.school),
            ("other", &self.other),
        ] {
            if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(Error::validation(format!(
                    "alpha_{name} entries must be finite and >= 0"
                )));
            }
        }
        Ok(())
    }
}

/// The four location-specific baseline contact matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactMatrixSet {
    pub home: ContactMatrix,
    pub work: ContactMatrix,
    pub school: ContactMatrix,
    pub other: ContactMatrix,
}

impl ContactMatrixSet {
    pub fn validate(&self) -> Result<()> {
        self.home.validate()?;
        self.work.validate()?;
        self.school.validate()?;
        self.other.validate()
    }

    /// Pre-lockdown matrix: plain sum over locations.
    pub fn baseline(&self) -> ContactMatrix {
        self.home.add(&self.work).add(&self.school).add(&self.other)
    }

    /// Row `i` of each location matrix is scaled by the group-`i` multiplier.
    pub fn assemble(&self, alphas: &AlphaMultipliers) -> ContactMatrix {
        let mut out = [[0.0; AGE_GROUPS]; AGE_GROUPS];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, c) in row.iter_mut().enumerate() {
                *c = alphas.home[i] * self.home.0[i][j]
                    + alphas.work[i] * self.work.0[i][j]
                    + alphas.school[i] * self.school.0[i][j]
                    + alphas.other[i] * self.other.0[i][j];
            }
        }
        ContactMatrix(out)
    }
}

/// Total population per age group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationCensus(pub [f64; AGE_GROUPS]);

impl PopulationCensus {
    pub fn new(n: [f64; AGE_GROUPS]) -> Result<Self> {
        let c = Self(n);
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(i) = self.0.iter().position(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::structural(format!(
                "census entry for group {} must be > 0, got {}",
                i + 1,
                self.0[i]
            )));
        }
        Ok(())
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_set() -> ContactMatrixSet {
        let mk = |scale: f64| {
            let mut m = [[0.0; AGE_GROUPS]; AGE_GROUPS];
            for (i, row) in m.iter_mut().enumerate() {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = scale * (1.0 + i as f64 + 0.5 * j as f64);
                }
            }
            ContactMatrix(m)
        };
        ContactMatrixSet {
            home: mk(1.0),
            work: mk(0.7),
            school: mk(0.3),
            other: mk(1.3),
        }
    }

    #[test]
    fn unit_alphas_give_baseline() {
        let set = sample_set();
        assert_eq!(set.assemble(&AlphaMultipliers::baseline()), set.baseline());
    }

    #[test]
    fn home_only() {
        let set = sample_set();
        let alphas = AlphaMultipliers {
            home: [1.0; 5],
            work: [0.0; 5],
            school: [0.0; 5],
            other: [0.0; 5],
        };
        assert_eq!(set.assemble(&alphas), set.home);
    }

    #[test]
    fn single_row_work_reduction() {
        let set = sample_set();
        let mut alphas = AlphaMultipliers::baseline();
        alphas.work[0] = 0.5;
        let base = set.baseline();
        let c = set.assemble(&alphas);
        for i in 0..AGE_GROUPS {
            for j in 0..AGE_GROUPS {
                let expected = if i == 0 {
                    base.0[i][j] - 0.5 * set.work.0[i][j]
                } else {
                    base.0[i][j]
                };
                assert!((c.0[i][j] - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mobility_alphas() {
        let a = AlphaMultipliers::from_mobility(1.0, 1.0, 1.0, 1.0, 0.3, 0.2);
        assert_eq!(&a.work[..3], &[1.0, 1.0, 1.0]);
        let a = AlphaMultipliers::from_mobility(0.1, 0.4, 0.7, 0.5, 0.57, 0.71);
        for i in 0..3 {
            assert!((a.work[i] - 0.2).abs() < 1e-15);
            assert!((a.school[i] - 0.05).abs() < 1e-15);
            assert!((a.other[i] - 0.35).abs() < 1e-15);
        }
        for v in [a.work, a.school, a.other] {
            assert_eq!(v[3], 0.57);
            assert_eq!(v[4], 0.71);
        }
        assert_eq!(a.home, [1.0; 5]);
    }

    #[test]
    fn structural_checks() {
        assert!(ContactMatrix::from_rows(&vec![vec![1.0; 5]; 4]).is_err());
        assert!(ContactMatrix::from_rows(&[
            vec![1.0; 4],
            vec![1.0; 5],
            vec![1.0; 5],
            vec![1.0; 5],
            vec![1.0; 5]
        ])
        .is_err());
        assert!(PopulationCensus::new([1.0, 2.0, 0.0, 1.0, 1.0]).is_err());
    }
}
