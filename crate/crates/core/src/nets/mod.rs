//! Small multilayer perceptrons with exact reverse-mode gradients.

mod adam;
mod embedding;
mod gradcheck;
mod mlp;

pub use self::{
    adam::{adam_step, AdamConfig, AdamState},
    embedding::{condition_embedding, time_embedding},
    gradcheck::{finite_diff_check, GradReport},
    mlp::{Activation, Gradients, MlpModel, MlpSpec, Tape},
};

use crate::{ConditionLabel, Matrix, Result};

/// Anything that predicts the noise in `z_t` given `(t, c)`.
pub trait NoiseModel {
    fn data_dim(&self) -> usize;

    fn predict(&self, z: &Matrix, t: &[f64], labels: &[ConditionLabel]) -> Result<Matrix>;
}

impl<M: NoiseModel + ?Sized> NoiseModel for &M {
    fn data_dim(&self) -> usize {
        (**self).data_dim()
    }

    fn predict(&self, z: &Matrix, t: &[f64], labels: &[ConditionLabel]) -> Result<Matrix> {
        (**self).predict(z, t, labels)
    }
}
