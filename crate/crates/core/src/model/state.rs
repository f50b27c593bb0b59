use serde::{Deserialize, Serialize};

use super::AGE_GROUPS;

/// Population of every compartment, per age group, at one instant.
///
/// Also used as the shape of a rate vector (d/dt of each entry).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CompartmentState {
    pub s: [f64; AGE_GROUPS],
    pub e: [f64; AGE_GROUPS],
    pub i_sc1: [f64; AGE_GROUPS],
    pub i_sc2: [f64; AGE_GROUPS],
    pub i_c1: [f64; AGE_GROUPS],
    pub i_c2: [f64; AGE_GROUPS],
    pub r: [f64; AGE_GROUPS],
    pub d: [f64; AGE_GROUPS],
}

pub const COMPARTMENT_NAMES: [&str; 8] = ["S", "E", "I_SC1", "I_SC2", "I_C1", "I_C2", "R", "D"];

impl CompartmentState {
    pub fn compartments(&self) -> [&[f64; AGE_GROUPS]; 8] {
        [
            &self.s,
            &self.e,
            &self.i_sc1,
            &self.i_sc2,
            &self.i_c1,
            &self.i_c2,
            &self.r,
            &self.d,
        ]
    }

    fn compartments_mut(&mut self) -> [&mut [f64; AGE_GROUPS]; 8] {
        [
            &mut self.s,
            &mut self.e,
            &mut self.i_sc1,
            &mut self.i_sc2,
            &mut self.i_c1,
            &mut self.i_c2,
            &mut self.r,
            &mut self.d,
        ]
    }

    /// Per-group sum over all eight compartments.
    pub fn group_totals(&self) -> [f64; AGE_GROUPS] {
        let mut out = [0.0; AGE_GROUPS];
        for c in self.compartments() {
            for (o, v) in out.iter_mut().zip(c) {
                *o += v;
            }
        }
        out
    }

    pub fn total(&self) -> f64 {
        self.group_totals().iter().sum()
    }

    /// I^C_tot: everyone in clinical care, summed over groups.
    pub fn hospitalised(&self) -> f64 {
        self.i_c1.iter().zip(&self.i_c2).map(|(a, b)| a + b).sum()
    }

    pub fn min_entry(&self) -> f64 {
        self.compartments()
            .iter()
            .flat_map(|c| c.iter())
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// `self + h * other`, entrywise.
    pub fn add_scaled(&self, other: &CompartmentState, h: f64) -> CompartmentState {
        let mut out = *self;
        for (dst, src) in out.compartments_mut().into_iter().zip(other.compartments()) {
            for (a, b) in dst.iter_mut().zip(src) {
                *a += h * b;
            }
        }
        out
    }

    /// Flattened as 8 blocks of 5, in [`COMPARTMENT_NAMES`] order.
    pub fn to_flat(&self) -> Vec<f64> {
        self.compartments()
            .iter()
            .flat_map(|c| c.iter().copied())
            .collect()
    }
}
