use alloc::{format, vec, vec::Vec};

use crate::{Error, Matrix, Result, Schedule};

/// Class id in `[0, K)` or the unconditional symbol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ConditionLabel {
    Class(u32),
    Null,
}

impl ConditionLabel {
    pub fn class(&self) -> Option<usize> {
        match self {
            ConditionLabel::Class(c) => Some(*c as usize),
            ConditionLabel::Null => None,
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, ConditionLabel::Null)
    }
}

/// Points with their own timestep and condition, one row each.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentBatch {
    pub z: Matrix,
    pub t: Vec<f64>,
    pub cond: Vec<ConditionLabel>,
}

impl LatentBatch {
    pub fn new(z: Matrix, t: Vec<f64>, cond: Vec<ConditionLabel>) -> Result<Self> {
        if t.len() != z.rows() || cond.len() != z.rows() {
            return Err(Error::shape(
                "LatentBatch::new",
                format!("{} timesteps and labels", z.rows()),
                format!("{} timesteps, {} labels", t.len(), cond.len()),
            ));
        }
        if !z.is_finite() {
            return Err(Error::Config("latent batch contains non-finite values".to_string()));
        }
        Ok(Self { z, t, cond })
    }

    /// Every row at the same timestep.
    pub fn at(z: Matrix, t: f64, cond: Vec<ConditionLabel>) -> Result<Self> {
        let n = z.rows();
        Self::new(z, vec![t; n], cond)
    }

    pub fn len(&self) -> usize {
        self.z.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.z.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.z.cols()
    }

    /// Checks `0 <= t[i] <= T` for every row.
    pub fn validate(&self, schedule: &Schedule) -> Result<()> {
        for &t in &self.t {
            schedule.check_timestep(t)?;
        }
        Ok(())
    }

    pub fn select(&self, idx: &[usize]) -> LatentBatch {
        LatentBatch {
            z: self.z.select_rows(idx),
            t: idx.iter().map(|&i| self.t[i]).collect(),
            cond: idx.iter().map(|&i| self.cond[i]).collect(),
        }
    }
}
