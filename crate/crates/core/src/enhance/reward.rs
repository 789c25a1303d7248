use alloc::{format, vec::Vec};

use crate::{teacher::MixtureDataset, ConditionLabel, Error, Matrix, Result};

/// Class-aware analytic reward
/// `s(x, c) = scale * (1 - |x - center_c| / radius)`, clipped below at `-scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardModel {
    centers: Vec<Vec<f64>>,
    pub radius: f64,
    pub scale: f64,
}

impl RewardModel {
    pub fn new(centers: Vec<Vec<f64>>, radius: f64, scale: f64) -> Result<Self> {
        if !(radius > 0.0 && scale > 0.0 && radius.is_finite() && scale.is_finite()) {
            return Err(Error::Config(format!(
                "reward radius {radius} / scale {scale} must be positive"
            )));
        }
        if centers.is_empty() {
            return Err(Error::Empty("reward centers"));
        }
        Ok(Self { centers, radius, scale })
    }

    /// One target per class at the centroid of its components.
    pub fn from_dataset(ds: &MixtureDataset, radius: f64, scale: f64) -> Result<Self> {
        Self::new((0..ds.classes()).map(|k| ds.class_center(k)).collect(), radius, scale)
    }

    pub fn classes(&self) -> usize {
        self.centers.len()
    }

    pub fn center(&self, class: usize) -> &[f64] {
        &self.centers[class]
    }

    fn class_of(&self, c: ConditionLabel) -> Result<usize> {
        match c.class() {
            Some(k) if k < self.centers.len() => Ok(k),
            _ => Err(Error::Config(format!(
                "reward needs a class label below {}, got {c:?}",
                self.centers.len()
            ))),
        }
    }

    /// Score and its gradient with respect to `x`.
    pub fn score_grad(&self, x: &[f64], c: ConditionLabel) -> Result<(f64, Vec<f64>)> {
        let center = &self.centers[self.class_of(c)?];
        let d: Vec<f64> = x.iter().zip(center).map(|(a, b)| a - b).collect();
        let dist = libm::sqrt(d.iter().map(|v| v * v).sum());
        let raw = self.scale * (1.0 - dist / self.radius);
        if raw <= -self.scale || dist == 0.0 {
            return Ok((raw.max(-self.scale), alloc::vec![0.0; x.len()]));
        }
        let k = -self.scale / (self.radius * dist);
        Ok((raw, d.into_iter().map(|v| k * v).collect()))
    }

    pub fn score(&self, x: &[f64], c: ConditionLabel) -> Result<f64> {
        Ok(self.score_grad(x, c)?.0)
    }

    pub fn mean_score(&self, x: &Matrix, labels: &[ConditionLabel]) -> Result<f64> {
        if x.rows() != labels.len() {
            return Err(Error::shape("mean reward labels", x.rows(), labels.len()));
        }
        if labels.is_empty() {
            return Err(Error::Empty("mean reward batch"));
        }
        let mut total = 0.0;
        for (row, &c) in x.iter_rows().zip(labels) {
            total += self.score(row, c)?;
        }
        Ok(total / labels.len() as f64)
    }
}
