use alloc::{format, vec::Vec};
use core::f64::consts::PI;

use crate::{
    rng::{self, stream},
    ConditionLabel, Error, Matrix, Result,
};

/// Class-conditional Gaussian mixture with a shared isotropic spread.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureDataset {
    /// `means[k]` holds the component means of class `k`, one per row.
    means: Vec<Matrix>,
    sigma: f64,
}

impl MixtureDataset {
    pub fn new(means: Vec<Matrix>, sigma: f64) -> Result<Self> {
        if means.is_empty() || means.iter().any(|m| m.rows() == 0) {
            return Err(Error::Config("every class needs at least one component".to_string()));
        }
        let dim = means[0].cols();
        if means.iter().any(|m| m.cols() != dim) {
            return Err(Error::Config("component means disagree on dimension".to_string()));
        }
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::Config(format!("sigma must be finite and >= 0, got {sigma}")));
        }
        let ds = Self { means, sigma };
        let sep = ds.min_interclass_distance();
        if ds.classes() > 1 && !(sep > 4.0 * sigma) {
            return Err(Error::Config(format!(
                "classes overlap: nearest means of different classes are {sep} apart, need > 4 sigma = {}",
                4.0 * sigma
            )));
        }
        Ok(ds)
    }

    /// `K` classes of two adjacent components each, evenly spaced on a circle.
    pub fn circle(classes: usize, radius: f64, sigma: f64) -> Result<Self> {
        let points = 2 * classes;
        let means = (0..classes)
            .map(|k| {
                let angle = |j: usize| 2.0 * PI * (2 * k + j) as f64 / points as f64;
                Matrix::from_rows(&[
                    &[radius * libm::cos(angle(0)), radius * libm::sin(angle(0))],
                    &[radius * libm::cos(angle(1)), radius * libm::sin(angle(1))],
                ])
            })
            .collect();
        Self::new(means, sigma)
    }

    pub fn classes(&self) -> usize {
        self.means.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].cols()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn means(&self, class: usize) -> &Matrix {
        &self.means[class]
    }

    /// Centroid of the class's component means.
    pub fn class_center(&self, class: usize) -> Vec<f64> {
        self.means[class].column_means()
    }

    fn min_interclass_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for a in 0..self.classes() {
            for b in a + 1..self.classes() {
                for ra in self.means[a].iter_rows() {
                    for rb in self.means[b].iter_rows() {
                        let d2: f64 = ra.iter().zip(rb).map(|(x, y)| (x - y) * (x - y)).sum();
                        best = best.min(libm::sqrt(d2));
                    }
                }
            }
        }
        best
    }

    /// Draw number `index`; `class` overrides the sampled label.
    fn draw(&self, seed: u64, stream_id: u64, index: u64, class: Option<usize>, out: &mut [f64]) -> usize {
        let mut r = rng::stream_rng(seed, stream_id, index);
        let sampled = rng::index(&mut r, self.classes());
        let k = class.unwrap_or(sampled);
        let comp = rng::index(&mut r, self.means[k].rows());
        for (o, m) in out.iter_mut().zip(self.means[k].row(comp)) {
            *o = m + self.sigma * rng::standard_normal(&mut r);
        }
        k
    }

    /// `n` labelled draws with indices `0..n`.
    pub fn sample(&self, n: usize, seed: u64) -> (Matrix, Vec<ConditionLabel>) {
        self.sample_range(0, n, seed)
    }

    /// Draws with indices `start..start + n`; each depends only on `(seed, index)`.
    pub fn sample_range(&self, start: u64, n: usize, seed: u64) -> (Matrix, Vec<ConditionLabel>) {
        let mut points = Matrix::zeros(n, self.dim());
        let labels = (0..n)
            .map(|i| {
                let k = self.draw(seed, stream::DATASET, start + i as u64, None, points.row_mut(i));
                ConditionLabel::Class(k as u32)
            })
            .collect();
        (points, labels)
    }

    /// `n` draws from a single class.
    pub fn sample_class(&self, class: usize, n: usize, seed: u64) -> Matrix {
        let mut points = Matrix::zeros(n, self.dim());
        for i in 0..n {
            self.draw(seed, stream::DATASET, i as u64, Some(class), points.row_mut(i));
        }
        points
    }

    /// Held-out reference draws with the given labels, from a stream disjoint
    /// from the training draws. A null label samples the class too.
    pub fn truth_for(&self, labels: &[ConditionLabel], seed: u64) -> Matrix {
        let mut points = Matrix::zeros(labels.len(), self.dim());
        for (i, l) in labels.iter().enumerate() {
            self.draw(seed, stream::TRUTH, i as u64, l.class(), points.row_mut(i));
        }
        points
    }
}
